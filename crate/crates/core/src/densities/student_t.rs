use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::TargetDensity;
use crate::math::{ln_gamma, log_sum_exp};
use crate::{Error, Result};

/// Mixture of multivariate t components sharing one scale matrix and one
/// degree of freedom. The unnormalized density is `Σ_k w_k · c · p_t(x; μ_k)`
/// where `c` is the common density prefactor, so the normalizing constant
/// is `c` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TMixture {
    dim: usize,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Lower-triangular Cholesky factor of the scale matrix, row-major.
    chol: Vec<f64>,
    nu: f64,
    log_c: f64,
}

/// Lower Cholesky factor of a row-major symmetric matrix.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

pub fn t_mixture_target(weights: &[f64], means: &[Vec<f64>], scale: &[f64], nu: f64) -> Result<TMixture> {
    if weights.is_empty() || weights.len() != means.len() {
        return Err(Error::param("need one mean per mixture weight"));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::param("mixture weights must be non-negative and sum to 1"));
    }
    let dim = means[0].len();
    if dim == 0 || means.iter().any(|m| m.len() != dim || m.iter().any(|v| !v.is_finite())) {
        return Err(Error::param("component means must share a positive dimension"));
    }
    if scale.len() != dim * dim {
        return Err(Error::param(format!("scale matrix must be {dim}x{dim}")));
    }
    for i in 0..dim {
        for j in 0..i {
            let (a, b) = (scale[i * dim + j], scale[j * dim + i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::param("scale matrix must be symmetric"));
            }
        }
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::param("degrees of freedom must be positive"));
    }
    let chol = cholesky(scale, dim)
        .ok_or_else(|| Error::param("scale matrix is not positive definite (Cholesky failed)"))?;
    let log_det: f64 = (0..dim).map(|i| 2.0 * chol[i * dim + i].ln()).sum();
    let p = dim as f64;
    let log_c = ln_gamma(0.5 * (nu + p))
        - ln_gamma(0.5 * nu)
        - 0.5 * p * nu.ln()
        - 0.5 * p * core::f64::consts::PI.ln()
        - 0.5 * log_det;
    Ok(TMixture {
        dim,
        log_weights: weights.iter().map(|w| w.ln()).collect(),
        weights: weights.to_vec(),
        means: means.to_vec(),
        chol,
        nu,
        log_c,
    })
}

impl TMixture {
    /// Solves `L z = x - μ` in place and returns `‖z‖²`.
    fn whiten(&self, x: &[f64], mu: &[f64], z: &mut [f64]) -> f64 {
        let n = self.dim;
        let mut q = 0.0;
        for i in 0..n {
            let mut s = x[i] - mu[i];
            for k in 0..i {
                s -= self.chol[i * n + k] * z[k];
            }
            z[i] = s / self.chol[i * n + i];
            q += z[i] * z[i];
        }
        q
    }

    /// Overwrites `z` with `L⁻ᵀ z`.
    fn back_substitute(&self, z: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.chol[k * n + i] * z[k];
            }
            z[i] = s / self.chol[i * n + i];
        }
    }

    fn component_log_terms(&self, x: &[f64], scratch: &mut [f64]) -> Vec<f64> {
        let p = self.dim as f64;
        self.means
            .iter()
            .zip(&self.log_weights)
            .map(|(mu, lw)| {
                let q = self.whiten(x, mu, scratch);
                lw + 2.0 * self.log_c - 0.5 * (self.nu + p) * (q / self.nu).ln_1p()
            })
            .collect()
    }
}

impl TargetDensity for TMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> String {
        format!("tmix{}", self.dim)
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.dim];
        log_sum_exp(&self.component_log_terms(x, &mut z))
    }

    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.dim as f64;
        let mut z = vec![0.0; self.dim];
        let terms = self.component_log_terms(x, &mut z);
        let total = log_sum_exp(&terms);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (mu, t) in self.means.iter().zip(&terms) {
            let w = (t - total).exp();
            if w == 0.0 {
                continue;
            }
            let q = self.whiten(x, mu, &mut z);
            self.back_substitute(&mut z);
            // ∇ log kernel = -(ν + p) Σ⁻¹(x - μ) / (ν + q)
            let factor = -w * (self.nu + p) / (self.nu + q);
            for (g, zi) in grad.iter_mut().zip(&z) {
                *g += factor * zi;
            }
        }
        total
    }

    fn exact_log_z(&self) -> Option<f64> {
        Some(self.log_c)
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let chi = ChiSquared::new(self.nu).map_err(|_| Error::param("invalid degrees of freedom"))?;
        let g: f64 = chi.sample(rng);
        let scale = (self.nu / g).sqrt();
        let n = self.dim;
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[i * n + j] * z[j];
            }
            out[i] = self.means[k][i] + scale * s;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{symmetric_log_grid, trapezoid_on_grid};

    #[test]
    fn cauchy_normalization_by_log_grid_quadrature() {
        let t = t_mixture_target(&[1.0], &[vec![0.0]], &[1.0], 1.0).unwrap();
        // c = Γ(1)/(Γ(½)·√π) = 1/π
        assert!((t.exact_log_z().unwrap() + core::f64::consts::PI.ln()).abs() < 1e-12);
        let grid = symmetric_log_grid(0.0, 20.0, 1e7, 4000, 4000);
        let z = trapezoid_on_grid(|x| t.log_unnorm(&[x]).exp(), &grid);
        assert!((z / t.exact_log_z().unwrap().exp() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn equal_means_collapse_to_single_component() {
        let s = [2.0, 0.3, 0.3, 1.0];
        let one = t_mixture_target(&[1.0], &[vec![0.5, -1.0]], &s, 3.0).unwrap();
        let two = t_mixture_target(&[0.5, 0.5], &[vec![0.5, -1.0], vec![0.5, -1.0]], &s, 3.0).unwrap();
        for x in [[0.0, 0.0], [3.0, -2.0], [-10.0, 7.5]] {
            assert!((one.log_unnorm(&x) - two.log_unnorm(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_spd_scale_is_rejected() {
        let r = t_mixture_target(&[1.0], &[vec![0.0, 0.0]], &[1.0, 2.0, 2.0, 1.0], 2.0);
        assert!(matches!(r, Err(Error::Parameter(m)) if m.contains("Cholesky")));
        let r = t_mixture_target(&[0.6, 0.3], &[vec![0.0], vec![1.0]], &[1.0], 2.0);
        assert!(r.is_err());
    }
}
