//! Bridge estimators of `r = Z₁/Z₂`.
//!
//! Each estimator comes in two forms: one over precomputed [`LogRatios`] and
//! a convenience wrapper that evaluates the densities on the batches first.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::RngCore;

use crate::densities::{log_unnorm_batch, TargetDensity};
use crate::divergences::{estimate_harmonic_divergence, estimate_re2, GeneratorFunction};
use crate::math::{log_add_exp, log_sum_exp, sigmoid};
use crate::{Error, LogRatios, Result, SampleBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeResult {
    pub log_r_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `log r̂` after each iteration, starting value first.
    pub trace: Vec<f64>,
    pub re2_estimate: Option<f64>,
    pub saturated: bool,
}

impl BridgeResult {
    fn closed_form(log_r_hat: f64) -> Self {
        BridgeResult {
            log_r_hat,
            iterations: 0,
            converged: true,
            trace: vec![log_r_hat],
            re2_estimate: None,
            saturated: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationOptions {
    /// Starting value; `None` starts from the geometric estimate.
    pub log_r0: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions { log_r0: None, tol: 1e-8, max_iter: 500 }
    }
}

impl IterationOptions {
    pub fn starting_at(log_r0: f64) -> Self {
        IterationOptions { log_r0: Some(log_r0), ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("convergence tolerance must be positive"));
        }
        if let Some(v) = self.log_r0 {
            if !v.is_finite() {
                return Err(Error::param("starting value must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsDirection {
    /// `r̂ = mean q̃₁/q̃₂` over samples from `q₂`.
    Q2Proposal,
    /// `r̂ = 1 / mean q̃₂/q̃₁` over samples from `q₁`.
    Q1Proposal,
}

fn sizes(ratios: &LogRatios) -> (f64, f64, f64, f64) {
    let n1 = ratios.n1() as f64;
    let n2 = ratios.n2() as f64;
    let n = n1 + n2;
    (n1, n2, (n1 / n).ln(), (n2 / n).ln())
}

/// One step of the optimal iterative procedure, in log space:
/// numerator terms `q̃₁/(s₁q̃₁ + s₂r q̃₂)` over `q₂` samples, denominator terms
/// `q̃₂/(s₁q̃₁ + s₂r q̃₂)` over `q₁` samples.
fn optimal_step(ratios: &LogRatios, log_r: f64) -> f64 {
    let (n1, n2, ls1, ls2) = sizes(ratios);
    let num: Vec<f64> = ratios.at2().iter().map(|l| -log_add_exp(ls1, ls2 + log_r - l)).collect();
    let den: Vec<f64> = ratios.at1().iter().map(|l| -log_add_exp(ls1 + l, ls2 + log_r)).collect();
    log_sum_exp(&num) - n2.ln() - log_sum_exp(&den) + n1.ln()
}

/// Score `S(r) = −Σ₁ s₂r q̃₂/(s₁q̃₁ + s₂r q̃₂) + Σ₂ s₁q̃₁/(s₁q̃₁ + s₂r q̃₂)`,
/// whose unique root is the optimal Bridge estimate.
pub fn optimal_score(ratios: &LogRatios, log_r: f64) -> f64 {
    let (_, _, ls1, ls2) = sizes(ratios);
    let k = ls1 - ls2 - log_r;
    let a: f64 = ratios.at1().iter().map(|l| sigmoid(-(k + l))).sum();
    let b: f64 = ratios.at2().iter().map(|l| sigmoid(k + l)).sum();
    b - a
}

fn iterate<F: FnMut(f64) -> f64>(mut step: F, log_r0: f64, tol: f64, max_iter: usize, damp: bool) -> (Vec<f64>, bool) {
    let mut trace = vec![log_r0];
    let mut cur = log_r0;
    let mut last_sign = 0.0;
    let mut flips = 0;
    let mut damping = 1.0;
    for _ in 0..max_iter {
        let raw = step(cur) - cur;
        if damp && raw != 0.0 {
            let sign = raw.signum();
            if last_sign != 0.0 && sign != last_sign {
                flips += 1;
                if flips >= 3 {
                    damping = 0.5;
                }
            }
            last_sign = sign;
        }
        let next = cur + damping * raw;
        trace.push(next);
        if !next.is_finite() {
            return (trace, false);
        }
        let delta = (next - cur).abs();
        cur = next;
        if delta < tol {
            return (trace, true);
        }
    }
    (trace, false)
}

/// Optimal Bridge estimate by fixed-point iteration, with the plug-in `RE²`
/// from the harmonic divergence at `π = s₂`.
pub fn optimal_bridge_from(ratios: &LogRatios, opts: IterationOptions) -> Result<BridgeResult> {
    opts.validate()?;
    let start = opts.log_r0.unwrap_or_else(|| geometric_bridge_from(ratios).log_r_hat);
    let (trace, converged) = iterate(|lr| optimal_step(ratios, lr), start, opts.tol, opts.max_iter, false);
    let n = ratios.n1() + ratios.n2();
    let pi = ratios.n2() as f64 / n as f64;
    let div = estimate_harmonic_divergence(pi, ratios, None)?;
    let (re2_estimate, saturated) = match estimate_re2(pi, n, &div) {
        Ok(v) => (Some(v), false),
        Err(Error::Saturated { .. }) => (None, true),
        Err(e) => return Err(e),
    };
    Ok(BridgeResult {
        log_r_hat: *trace.last().unwrap(),
        iterations: trace.len() - 1,
        converged,
        trace,
        re2_estimate,
        saturated,
    })
}

pub fn optimal_bridge<D1, D2>(
    q1: &D1,
    q2: &D2,
    s1: &SampleBatch,
    s2: &SampleBatch,
    opts: IterationOptions,
) -> Result<BridgeResult>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    optimal_bridge_from(&LogRatios::evaluate(q1, q2, s1, s2)?, opts)
}

/// `r̂ = [n₂⁻¹ Σ √(q̃₁/q̃₂)] / [n₁⁻¹ Σ √(q̃₂/q̃₁)]`.
pub fn geometric_bridge_from(ratios: &LogRatios) -> BridgeResult {
    let half2: Vec<f64> = ratios.at2().iter().map(|l| 0.5 * l).collect();
    let half1: Vec<f64> = ratios.at1().iter().map(|l| -0.5 * l).collect();
    let v = log_sum_exp(&half2) - (ratios.n2() as f64).ln() - log_sum_exp(&half1) + (ratios.n1() as f64).ln();
    BridgeResult::closed_form(v)
}

pub fn geometric_bridge<D1, D2>(q1: &D1, q2: &D2, s1: &SampleBatch, s2: &SampleBatch) -> Result<BridgeResult>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    Ok(geometric_bridge_from(&LogRatios::evaluate(q1, q2, s1, s2)?))
}

/// Importance sampling from log ratios `log q̃₁ − log q̃₂` at the proposal's samples.
pub fn importance_sampling_from(direction: IsDirection, log_ratios: &[f64]) -> Result<BridgeResult> {
    if log_ratios.is_empty() {
        return Err(Error::param("importance sampling needs at least one sample"));
    }
    let n = (log_ratios.len() as f64).ln();
    let v = match direction {
        IsDirection::Q2Proposal => log_sum_exp(log_ratios) - n,
        IsDirection::Q1Proposal => {
            let neg: Vec<f64> = log_ratios.iter().map(|l| -l).collect();
            n - log_sum_exp(&neg)
        }
    };
    Ok(BridgeResult::closed_form(v))
}

pub fn importance_sampling_bridge<D1, D2>(
    direction: IsDirection,
    q1: &D1,
    q2: &D2,
    batch: &SampleBatch,
) -> Result<BridgeResult>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    let a = log_unnorm_batch(q1, batch)?;
    let b = log_unnorm_batch(q2, batch)?;
    let ratios: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    importance_sampling_from(direction, &ratios)
}

/// Fixed-point map for the stationary point of `Ĝ_f`:
/// `r = [mean₂ f″(u) q̃₁²/q̃₂²] / [mean₁ f″(u) q̃₁/q̃₂]` with `u = q̃₁/(q̃₂ r)`.
fn general_step(gen: &GeneratorFunction, ratios: &LogRatios, log_r: f64) -> f64 {
    let num: Vec<f64> = ratios.at2().iter().map(|l| gen.log_f_double_prime_log(l - log_r) + 2.0 * l).collect();
    let den: Vec<f64> = ratios.at1().iter().map(|l| gen.log_f_double_prime_log(l - log_r) + l).collect();
    log_sum_exp(&num) - (ratios.n2() as f64).ln() - log_sum_exp(&den) + (ratios.n1() as f64).ln()
}

/// Switches to half steps once the update direction has flipped three times.
pub fn general_f_bridge_from(gen: &GeneratorFunction, ratios: &LogRatios, opts: IterationOptions) -> Result<BridgeResult> {
    opts.validate()?;
    let start = opts.log_r0.unwrap_or_else(|| geometric_bridge_from(ratios).log_r_hat);
    let (trace, converged) = iterate(|lr| general_step(gen, ratios, lr), start, opts.tol, opts.max_iter, true);
    let log_r_hat = *trace.last().unwrap();
    if !log_r_hat.is_finite() {
        return Err(Error::Unsupported(format!("{} fixed point diverged", gen.name())));
    }
    Ok(BridgeResult { log_r_hat, iterations: trace.len() - 1, converged, trace, re2_estimate: None, saturated: false })
}

pub fn general_f_bridge<D1, D2>(
    gen: &GeneratorFunction,
    q1: &D1,
    q2: &D2,
    s1: &SampleBatch,
    s2: &SampleBatch,
    opts: IterationOptions,
) -> Result<BridgeResult>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    general_f_bridge_from(gen, &LogRatios::evaluate(q1, q2, s1, s2)?, opts)
}

/// Random disjoint partition with `floor(n · fraction)` rows in the first part.
pub fn split_samples(batch: &SampleBatch, fraction: f64, rng: &mut dyn RngCore) -> Result<(SampleBatch, SampleBatch)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = batch.len();
    let n_train = (n as f64 * fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::param(format!("cannot split {n} samples with fraction {fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let id = batch.source_id();
    Ok((
        batch.select(&idx[..n_train], format!("{id}/train"))?,
        batch.select(&idx[n_train..], format!("{id}/estimate"))?,
    ))
}
