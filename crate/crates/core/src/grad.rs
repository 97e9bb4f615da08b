//! Gradient records over `(φ, log r̃)`, the adaptive-moment optimizer and a
//! central-difference verifier.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    pub value: f64,
    pub d_theta: Vec<f64>,
    pub d_log_r: f64,
}

/// A scalar objective of the flow parameters and `log r̃`.
pub trait Objective {
    fn param_len(&self) -> usize;

    fn value(&self, theta: &[f64], log_r: f64) -> Result<f64>;

    fn value_and_gradient(&self, theta: &[f64], log_r: f64) -> Result<GradientRecord>;

    /// Human-readable name of the parameter block containing `index`.
    fn block_of(&self, index: usize) -> String {
        format!("theta[{index}]")
    }
}

/// Evaluates the objective and its exact gradient, rejecting non-finite entries.
pub fn objective_with_gradients<O: Objective + ?Sized>(obj: &O, theta: &[f64], log_r: f64) -> Result<GradientRecord> {
    if theta.len() != obj.param_len() {
        return Err(Error::Shape(format!("theta has length {}, objective expects {}", theta.len(), obj.param_len())));
    }
    let rec = obj.value_and_gradient(theta, log_r)?;
    if !rec.value.is_finite() {
        return Err(Error::Gradient { block: "objective value".into() });
    }
    if let Some(i) = rec.d_theta.iter().position(|g| !g.is_finite()) {
        return Err(Error::Gradient { block: obj.block_of(i) });
    }
    if !rec.d_log_r.is_finite() {
        return Err(Error::Gradient { block: "log_r".into() });
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest discrepancy; `theta.len()` denotes `log r̃`.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Central differences with step `h` on every coordinate of `(θ, log r̃)`,
/// compared against [`objective_with_gradients`]. The relative error uses
/// `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn finite_difference_check<O: Objective + ?Sized>(obj: &O, theta: &[f64], log_r: f64, h: f64) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(Error::param("finite-difference step must be positive"));
    }
    let rec = objective_with_gradients(obj, theta, log_r)?;
    let mut analytic = rec.d_theta.clone();
    analytic.push(rec.d_log_r);
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        t[i] = theta[i] + h;
        let up = obj.value(&t, log_r)?;
        t[i] = theta[i] - h;
        let down = obj.value(&t, log_r)?;
        t[i] = theta[i];
        numeric.push((up - down) / (2.0 * h));
    }
    numeric.push((obj.value(theta, log_r + h)? - obj.value(theta, log_r - h)?) / (2.0 * h));
    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        if e > max_rel_error || e.is_nan() {
            max_rel_error = e;
            worst_index = i;
        }
    }
    Ok(FdReport { max_rel_error, worst_index, analytic, numeric })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    /// Fresh state with decays `(0.9, 0.999)` and `ε = 1e-8`.
    pub fn new(len: usize, learning_rate: f64) -> Self {
        OptimizerState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected descent step on `params`, in place.
    pub fn apply(&mut self, grads: &[f64], params: &mut [f64]) -> Result<()> {
        if grads.len() != self.first_moment.len() || params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments but got {} gradients and {} parameters",
                self.first_moment.len(),
                grads.len(),
                params.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Functional form of [`OptimizerState::apply`].
pub fn adam_step(state: &OptimizerState, grads: &[f64], params: &[f64]) -> Result<(Vec<f64>, OptimizerState)> {
    let mut s = state.clone();
    let mut p = params.to_vec();
    s.apply(grads, &mut p)?;
    Ok((p, s))
}

/// Rescales `g` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}
