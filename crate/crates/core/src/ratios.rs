use alloc::format;
use alloc::vec::Vec;

use crate::densities::{log_unnorm_batch, TargetDensity};
use crate::{Error, Result, SampleBatch};

/// Log density ratios `log q̃₁(ω) − log q̃₂(ω)` at samples from each side.
///
/// Every estimator in this crate depends on the two densities only through
/// these values, so they are computed once and shared.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatios {
    at1: Vec<f64>,
    at2: Vec<f64>,
}

impl LogRatios {
    pub fn new(at1: Vec<f64>, at2: Vec<f64>) -> Result<Self> {
        if at1.is_empty() || at2.is_empty() {
            return Err(Error::param("both sample sets must be non-empty"));
        }
        for (name, v) in [("q1", &at1), ("q2", &at2)] {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Evaluation { batch: format!("log ratios at {name} samples"), index });
            }
        }
        Ok(LogRatios { at1, at2 })
    }

    /// Evaluates both densities at both batches.
    pub fn evaluate<D1, D2>(q1: &D1, q2: &D2, s1: &SampleBatch, s2: &SampleBatch) -> Result<Self>
    where
        D1: TargetDensity + ?Sized,
        D2: TargetDensity + ?Sized,
    {
        let diff = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let at1 = diff(log_unnorm_batch(q1, s1)?, log_unnorm_batch(q2, s1)?);
        let at2 = diff(log_unnorm_batch(q1, s2)?, log_unnorm_batch(q2, s2)?);
        LogRatios::new(at1, at2)
    }

    /// Ratios at the `q₁` samples.
    pub fn at1(&self) -> &[f64] {
        &self.at1
    }

    /// Ratios at the `q₂` samples.
    pub fn at2(&self) -> &[f64] {
        &self.at2
    }

    pub fn n1(&self) -> usize {
        self.at1.len()
    }

    pub fn n2(&self) -> usize {
        self.at2.len()
    }

    /// Ratios after replacing `log q̃₁` by `log q̃₁ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        LogRatios {
            at1: self.at1.iter().map(|x| x + c).collect(),
            at2: self.at2.iter().map(|x| x + c).collect(),
        }
    }

    /// Ratios for the problem with the roles of the two densities exchanged.
    pub fn swapped(&self) -> Self {
        LogRatios {
            at1: self.at2.iter().map(|x| -x).collect(),
            at2: self.at1.iter().map(|x| -x).collect(),
        }
    }

    /// Pooled values, `q₁` samples first.
    pub fn pooled(&self) -> Vec<f64> {
        self.at1.iter().chain(&self.at2).copied().collect()
    }
}
