use alloc::format;
use alloc::string::String;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::TargetDensity;
use crate::math::{log_add_exp, log_normal_cdf};
use crate::{Error, Result};

/// Parameters of a product of `dim / 2` independent two-ring mixtures.
///
/// Each ring has unnormalized density `exp(-(‖x - μ‖² - s)² / (2σ²))` on `R²`,
/// so `s` is the squared radius at which the ring peaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingMixtureParams {
    pub dim: usize,
    pub mu1: [f64; 2],
    pub mu2: [f64; 2],
    pub radius: f64,
    pub thickness: f64,
}

impl RingMixtureParams {
    /// First density of the mixture-of-rings benchmark.
    pub fn benchmark_first(dim: usize) -> Self {
        RingMixtureParams { dim, mu1: [2.0, 2.0], mu2: [-2.0, -2.0], radius: 3.0, thickness: 1.0 }
    }

    /// Second density of the mixture-of-rings benchmark.
    pub fn benchmark_second(dim: usize) -> Self {
        RingMixtureParams { dim, mu1: [3.0, -3.0], mu2: [-3.0, 3.0], radius: 6.0, thickness: 2.0 }
    }

    /// Second density of the training-dynamics demonstration: closer centres.
    pub fn demo_second(dim: usize) -> Self {
        RingMixtureParams { dim, mu1: [2.0, -2.0], mu2: [-2.0, 2.0], radius: 6.0, thickness: 2.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(Error::param(format!("ring mixture dimension must be even and positive, got {}", self.dim)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::param("ring radius must be positive"));
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(Error::param("ring thickness must be positive"));
        }
        if self.mu1.iter().chain(&self.mu2).any(|v| !v.is_finite()) {
            return Err(Error::param("ring centres must be finite"));
        }
        Ok(())
    }

    /// `log Z` of a single two-dimensional ring: `½ log(2π³σ²) + log Φ(s/σ)`.
    pub fn single_ring_log_z(&self) -> f64 {
        let pi = core::f64::consts::PI;
        0.5 * (2.0 * pi * pi * pi * self.thickness * self.thickness).ln()
            + log_normal_cdf(self.radius / self.thickness)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RingMixture {
    params: RingMixtureParams,
    log_z: f64,
}

pub fn ring_mixture_target(params: RingMixtureParams) -> Result<RingMixture> {
    params.validate()?;
    let log_z = (params.dim / 2) as f64 * params.single_ring_log_z();
    Ok(RingMixture { params, log_z })
}

impl RingMixture {
    pub fn params(&self) -> &RingMixtureParams {
        &self.params
    }

    fn ring_exponent(&self, x: &[f64], mu: &[f64; 2]) -> (f64, f64) {
        let dx = x[0] - mu[0];
        let dy = x[1] - mu[1];
        let excess = dx * dx + dy * dy - self.params.radius;
        let s2 = self.params.thickness * self.params.thickness;
        (-excess * excess / (2.0 * s2), excess / s2)
    }

    /// Squared radius `t = r²` of a ring draw: `N(s, σ²)` truncated to `t > 0`.
    fn squared_radius(&self, rng: &mut dyn RngCore) -> f64 {
        let normal = Normal::new(self.params.radius, self.params.thickness)
            .expect("validated ring parameters");
        loop {
            let t: f64 = normal.sample(rng);
            if t > 0.0 {
                return t;
            }
        }
    }
}

impl TargetDensity for RingMixture {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn name(&self) -> String {
        format!("rings{}", self.params.dim)
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let half = -core::f64::consts::LN_2;
        x.chunks_exact(2)
            .map(|pair| {
                let (a, _) = self.ring_exponent(pair, &self.params.mu1);
                let (b, _) = self.ring_exponent(pair, &self.params.mu2);
                half + log_add_exp(a, b)
            })
            .sum()
    }

    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let half = -core::f64::consts::LN_2;
        let mut total = 0.0;
        for (pair, g) in x.chunks_exact(2).zip(grad.chunks_exact_mut(2)) {
            let (a, ea) = self.ring_exponent(pair, &self.params.mu1);
            let (b, eb) = self.ring_exponent(pair, &self.params.mu2);
            let lse = log_add_exp(a, b);
            total += half + lse;
            let wa = (a - lse).exp();
            let wb = (b - lse).exp();
            let (m1, m2) = (&self.params.mu1, &self.params.mu2);
            // d/dx of -(‖x-μ‖² - s)²/(2σ²) is -2 (‖x-μ‖² - s)/σ² · (x - μ)
            g[0] = -2.0 * (wa * ea * (pair[0] - m1[0]) + wb * eb * (pair[0] - m2[0]));
            g[1] = -2.0 * (wa * ea * (pair[1] - m1[1]) + wb * eb * (pair[1] - m2[1]));
        }
        total
    }

    fn exact_log_z(&self) -> Option<f64> {
        Some(self.log_z)
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        for pair in out.chunks_exact_mut(2) {
            let mu = if rng.random::<bool>() { self.params.mu1 } else { self.params.mu2 };
            let r = self.squared_radius(rng).sqrt();
            let theta = rng.random::<f64>() * core::f64::consts::TAU;
            pair[0] = mu[0] + r * theta.cos();
            pair[1] = mu[1] + r * theta.sin();
        }
        Ok(())
    }
}
