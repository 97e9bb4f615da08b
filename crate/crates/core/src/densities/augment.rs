use alloc::format;
use alloc::string::String;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::TargetDensity;
use crate::math::LN_2PI;
use crate::{Error, Result};

/// `base` extended by independent standard-normal coordinates. The padding
/// density is normalized, so the normalizing constant is that of `base`.
#[derive(Debug, Clone)]
pub struct Augmented<D> {
    base: D,
    extra: usize,
}

pub fn augment_with_standard_normal<D: TargetDensity>(base: D, extra_dims: usize) -> Result<Augmented<D>> {
    if extra_dims == 0 {
        return Err(Error::param("augmentation needs at least one extra dimension"));
    }
    Ok(Augmented { base, extra: extra_dims })
}

impl<D: TargetDensity> Augmented<D> {
    pub fn base(&self) -> &D {
        &self.base
    }

    pub fn extra_dims(&self) -> usize {
        self.extra
    }
}

impl<D: TargetDensity> TargetDensity for Augmented<D> {
    fn dim(&self) -> usize {
        self.base.dim() + self.extra
    }

    fn name(&self) -> String {
        format!("{}+n{}", self.base.name(), self.extra)
    }

    fn log_unnorm(&self, x: &[f64]) -> f64 {
        let (w, theta) = x.split_at(self.base.dim());
        self.base.log_unnorm(w) + theta.iter().map(|t| -0.5 * t * t - 0.5 * LN_2PI).sum::<f64>()
    }

    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.base.dim();
        let (w, theta) = x.split_at(d);
        let (gw, gt) = grad.split_at_mut(d);
        let mut v = self.base.log_unnorm_grad(w, gw);
        for (g, t) in gt.iter_mut().zip(theta) {
            *g = -t;
            v += -0.5 * t * t - 0.5 * LN_2PI;
        }
        v
    }

    fn exact_log_z(&self) -> Option<f64> {
        self.base.exact_log_z()
    }

    fn has_sampler(&self) -> bool {
        self.base.has_sampler()
    }

    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        let (w, theta) = out.split_at_mut(self.base.dim());
        self.base.sample_point(rng, w)?;
        for t in theta {
            *t = StandardNormal.sample(rng);
        }
        Ok(())
    }
}
