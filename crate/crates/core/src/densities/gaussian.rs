use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::TargetDensity;
use crate::math::LN_2PI;
use crate::{Error, Result};

/// `q̃(x) = exp(-Σ (x_j - m_j)² / (2 v_j))`, a Gaussian with diagonal
/// covariance and the normalizing factor left out.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
    log_z: f64,
}

pub fn gaussian_target(mean: &[f64], cov_diag: &[f64]) -> Result<DiagonalGaussian> {
    if mean.is_empty() || mean.len() != cov_diag.len() {
        return Err(Error::param("mean and cov_diag must be non-empty and of equal length"));
    }
    if let Some(v) = cov_diag.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::param(format!("variance must be positive, got {v}")));
    }
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::param("mean must be finite"));
    }
    let d = mean.len() as f64;
    let log_z = 0.5 * d * LN_2PI + 0.5 * cov_diag.iter().map(|v| v.ln()).sum::<f64>();
    Ok(DiagonalGaussian { mean: mean.to_vec(), var: cov_diag.to_vec(), log_z })
}

impl DiagonalGaussian {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variances(&self) -> &[f64] {
        &self.var
    }
}

impl TargetDensity for DiagonalGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn name(&self) -> String {
        format!("gaussian{}", self.mean.len())
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((xi, m), v) in x.iter().zip(&self.mean).zip(&self.var) {
            let z = xi - m;
            acc -= z * z / (2.0 * v);
        }
        acc
    }

    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut acc = 0.0;
        for (((xi, m), v), g) in x.iter().zip(&self.mean).zip(&self.var).zip(grad.iter_mut()) {
            let z = xi - m;
            acc -= z * z / (2.0 * v);
            *g = -z / v;
        }
        acc
    }

    fn exact_log_z(&self) -> Option<f64> {
        Some(self.log_z)
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        for ((o, m), v) in out.iter_mut().zip(&self.mean).zip(&self.var) {
            let z: f64 = StandardNormal.sample(rng);
            *o = m + v.sqrt() * z;
        }
        Ok(())
    }
}
