//! Unnormalized target densities `q̃(x)` on `R^d`.
//!
//! Every shipped target has full support, evaluates in natural-log space and
//! exposes the gradient of its log density (the flow trainer differentiates
//! through `log q̃` at transported points). Samplers take an explicit RNG so
//! concurrent callers can use independent streams.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;

use rand::RngCore;

use crate::{Error, Result, SampleBatch};

mod augment;
mod gaussian;
mod rings;
mod student_t;

pub use augment::{augment_with_standard_normal, Augmented};
pub use gaussian::{gaussian_target, DiagonalGaussian};
pub use rings::{ring_mixture_target, RingMixture, RingMixtureParams};
pub use student_t::{t_mixture_target, TMixture};

pub trait TargetDensity: Send + Sync {
    fn dim(&self) -> usize;

    /// Identifier used in sample batches and error messages.
    fn name(&self) -> String;

    fn log_unnorm(&self, x: &[f64]) -> f64;

    /// Writes `∇ log q̃(x)` into `grad` and returns `log q̃(x)`.
    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Natural log of the normalizing constant, when known in closed form.
    fn exact_log_z(&self) -> Option<f64> {
        None
    }

    fn has_sampler(&self) -> bool {
        false
    }

    /// Draws one point into `out` (length `dim`).
    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let _ = (rng, out);
        Err(Error::NoSampler(self.name()))
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn log_unnorm(&self, x: &[f64]) -> f64 {
        (**self).log_unnorm(x)
    }
    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_unnorm_grad(x, grad)
    }
    fn exact_log_z(&self) -> Option<f64> {
        (**self).exact_log_z()
    }
    fn has_sampler(&self) -> bool {
        (**self).has_sampler()
    }
    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        (**self).sample_point(rng, out)
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn name(&self) -> String {
        (**self).name()
    }
    fn log_unnorm(&self, x: &[f64]) -> f64 {
        (**self).log_unnorm(x)
    }
    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_unnorm_grad(x, grad)
    }
    fn exact_log_z(&self) -> Option<f64> {
        (**self).exact_log_z()
    }
    fn has_sampler(&self) -> bool {
        (**self).has_sampler()
    }
    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        (**self).sample_point(rng, out)
    }
}

/// Draws `count` independent points from `target`.
pub fn sample<D: TargetDensity + ?Sized>(
    target: &D,
    rng: &mut dyn RngCore,
    count: usize,
) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::param("sample count must be positive"));
    }
    let d = target.dim();
    let mut points = vec![0.0; count * d];
    for row in points.chunks_exact_mut(d) {
        target.sample_point(rng, row)?;
    }
    SampleBatch::new(points, d, target.name())
}

/// Evaluates `log q̃` at every row, failing on the first non-finite value.
pub fn log_unnorm_batch<D: TargetDensity + ?Sized>(
    target: &D,
    batch: &SampleBatch,
) -> Result<alloc::vec::Vec<f64>> {
    if batch.dim() != target.dim() {
        return Err(Error::Shape(alloc::format!(
            "batch `{}` has dimension {} but density `{}` has dimension {}",
            batch.source_id(),
            batch.dim(),
            target.name(),
            target.dim()
        )));
    }
    batch
        .rows()
        .enumerate()
        .map(|(i, x)| {
            let v = target.log_unnorm(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation { batch: batch.source_id().into(), index: i })
            }
        })
        .collect()
}
