//! The f-GAN-Bridge estimator: the hybrid objective, the minimax training
//! loop and the final Bridge step on held-out samples.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bridge::{optimal_bridge_from, split_samples, BridgeResult, IterationOptions};
use crate::densities::{log_unnorm_batch, TargetDensity};
use crate::divergences::{estimate_harmonic_divergence, harmonic_log_odds, DivergenceEstimate};
use crate::flow::FlowModel;
use crate::grad::{clip_norm, objective_with_gradients, GradientRecord, Objective, OptimizerState};
use crate::math::{log_sum_exp, sigmoid, softplus};
use crate::{Error, LogRatios, Result, SampleBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOrder {
    /// Both gradients at `(φ_t, r̃_t)`, then both updates.
    Simultaneous,
    /// Update `φ`, then take the `r̃` gradient at `(φ_{t+1}, r̃_t)`.
    Alternating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eta_phi: f64,
    pub eta_r: f64,
    /// Tolerance on the change of the objective between epochs.
    pub eps1: f64,
    /// Tolerance on the change of `log r̃` between epochs.
    pub eps2: f64,
    pub max_epochs: usize,
    /// Minibatch size per side; `None` trains on the full batch.
    pub minibatch: Option<usize>,
    pub seed: u64,
    pub grad_clip: f64,
    pub update_order: UpdateOrder,
    /// Starting `log r̃`; `None` maximizes `Ĝ` at the initial flow.
    pub init_log_r: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta1: 0.05,
            beta2: 0.05,
            eta_phi: 1e-3,
            eta_r: 1e-2,
            eps1: 5e-3,
            eps2: 5e-3,
            max_epochs: 500,
            minibatch: None,
            seed: 0,
            grad_clip: 100.0,
            update_order: UpdateOrder::Simultaneous,
            init_log_r: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return Err(Error::param("beta1 and beta2 must be non-negative"));
        }
        if !(self.eta_phi > 0.0 && self.eta_r > 0.0) {
            return Err(Error::param("learning rates must be positive"));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::param("eps1 and eps2 must be positive"));
        }
        if self.minibatch == Some(0) {
            return Err(Error::param("minibatch size must be positive"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::param("gradient clip must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ObjectiveAndRStable,
    MaxEpochs,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::ObjectiveAndRStable => "objective_and_r_stable",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_theta: Vec<f64>,
    /// Training-time `log r̃`; biased by adaptation, only used to seed the Bridge step.
    pub final_log_r_tilde: f64,
    pub objective_trace: Vec<f64>,
    pub r_trace: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_by: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `−log(1 − Ĝ_π) − β₁ mean₁(b − a) − β₂ mean₂(a)`.
    Hybrid,
    /// `Ĝ_π` itself, evaluated in its direct form.
    RawHarmonic,
}

/// The training objective over fixed batches, as a function of `(φ, log r̃)`.
///
/// Writing `a = log q̃₁^(φ)` and `b = log q̃₂`, the `q₁` side uses
/// `a₁ = log q̃₁(ω) − log|det ∂T/∂ω|`, `b₁ = log q̃₂(T(ω))`, and the `q₂` side
/// uses `a₂ = log q̃₁(T⁻¹(ω)) + log|det ∂T⁻¹/∂ω|`, `b₂ = log q̃₂(ω)`.
pub struct HybridObjective<'a, D1: ?Sized, D2: ?Sized> {
    model: &'a FlowModel,
    base: &'a D1,
    q2: &'a D2,
    s1: SampleBatch,
    s2: SampleBatch,
    base_at_1: Vec<f64>,
    q2_at_2: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub pi: f64,
    pub kind: ObjectiveKind,
}

struct Evaluation {
    value: f64,
    a1: Vec<f64>,
    b1: Vec<f64>,
    a2: Vec<f64>,
}

impl<'a, D1, D2> HybridObjective<'a, D1, D2>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a FlowModel,
        base: &'a D1,
        q2: &'a D2,
        s1: &SampleBatch,
        s2: &SampleBatch,
        beta1: f64,
        beta2: f64,
        pi: f64,
    ) -> Result<Self> {
        if model.dim() != base.dim() || model.dim() != q2.dim() {
            return Err(Error::Shape(format!(
                "flow dimension {} vs densities {} and {}",
                model.dim(),
                base.dim(),
                q2.dim()
            )));
        }
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::param("π must lie in (0, 1)"));
        }
        Ok(HybridObjective {
            model,
            base,
            q2,
            base_at_1: log_unnorm_batch(base, s1)?,
            q2_at_2: log_unnorm_batch(q2, s2)?,
            s1: s1.clone(),
            s2: s2.clone(),
            beta1,
            beta2,
            pi,
            kind: ObjectiveKind::Hybrid,
        })
    }

    pub fn raw(mut self) -> Self {
        self.kind = ObjectiveKind::RawHarmonic;
        self
    }

    /// Restriction to the given rows of each batch.
    pub fn subset(&self, rows1: &[usize], rows2: &[usize]) -> Result<Self> {
        Ok(HybridObjective {
            model: self.model,
            base: self.base,
            q2: self.q2,
            s1: self.s1.select(rows1, self.s1.source_id())?,
            s2: self.s2.select(rows2, self.s2.source_id())?,
            base_at_1: rows1.iter().map(|&i| self.base_at_1[i]).collect(),
            q2_at_2: rows2.iter().map(|&i| self.q2_at_2[i]).collect(),
            beta1: self.beta1,
            beta2: self.beta2,
            pi: self.pi,
            kind: self.kind,
        })
    }

    pub fn n1(&self) -> usize {
        self.s1.len()
    }

    pub fn n2(&self) -> usize {
        self.s2.len()
    }

    /// Log ratios of the transformed pair `(q̃₁^(φ), q̃₂)` at the transported batches.
    pub fn log_ratios(&self, theta: &[f64]) -> Result<LogRatios> {
        let model = self.model.with_theta(theta)?;
        let (y1, ld1) = model.forward_batch(self.s1.as_slice())?;
        let (x2, ld2) = model.inverse_batch(self.s2.as_slice())?;
        let d = model.dim();
        let at1 = (0..self.n1())
            .map(|i| self.base_at_1[i] - ld1[i] - self.q2.log_unnorm(&y1[i * d..(i + 1) * d]))
            .collect();
        let at2 = (0..self.n2())
            .map(|i| self.base.log_unnorm(&x2[i * d..(i + 1) * d]) + ld2[i] - self.q2_at_2[i])
            .collect();
        LogRatios::new(at1, at2)
    }

    fn combine(&self, a1: Vec<f64>, b1: Vec<f64>, a2: Vec<f64>, log_r: f64) -> Result<Evaluation> {
        let check = |v: &[f64], batch: &str| match v.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(Error::Evaluation { batch: batch.into(), index }),
            None => Ok(()),
        };
        check(&a1, "transformed q1 at q1 samples")?;
        check(&b1, "q2 at transported q1 samples")?;
        check(&a2, "transformed q1 at q2 samples")?;
        let ratios = LogRatios::new(
            a1.iter().zip(&b1).map(|(a, b)| a - b).collect(),
            a2.iter().zip(&self.q2_at_2).map(|(a, b)| a - b).collect(),
        )?;
        let value = match self.kind {
            ObjectiveKind::Hybrid => {
                let h = -crate::divergences::harmonic_log_one_minus(self.pi, &ratios, log_r);
                let like1 = a1.iter().zip(&b1).map(|(a, b)| b - a).sum::<f64>() / a1.len() as f64;
                let like2 = a2.iter().sum::<f64>() / a2.len() as f64;
                h - self.beta1 * like1 - self.beta2 * like2
            }
            ObjectiveKind::RawHarmonic => raw_harmonic(self.pi, &ratios, log_r).0,
        };
        Ok(Evaluation { value, a1, b1, a2 })
    }
}

/// `Ĝ_π` in its direct form with derivatives with respect to each log-odds.
fn raw_harmonic(pi: f64, ratios: &LogRatios, log_r: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let l1 = harmonic_log_odds(pi, ratios.at1(), log_r);
    let l2 = harmonic_log_odds(pi, ratios.at2(), log_r);
    let c1 = 1.0 / (pi * l1.len() as f64);
    let c2 = 1.0 / ((1.0 - pi) * l2.len() as f64);
    let mut g = 1.0;
    let mut d1 = Vec::with_capacity(l1.len());
    let mut d2 = Vec::with_capacity(l2.len());
    for l in &l1 {
        let p = sigmoid(-l);
        g -= c1 * p * p;
        d1.push(2.0 * c1 * p * p * (1.0 - p));
    }
    for l in &l2 {
        let p = sigmoid(*l);
        g -= c2 * p * p;
        d2.push(-2.0 * c2 * p * p * (1.0 - p));
    }
    (g, d1, d2)
}

impl<D1, D2> Objective for HybridObjective<'_, D1, D2>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    fn param_len(&self) -> usize {
        self.model.param_count()
    }

    fn value(&self, theta: &[f64], log_r: f64) -> Result<f64> {
        let model = self.model.with_theta(theta)?;
        let d = model.dim();
        let (y1, ld1) = model.forward_batch(self.s1.as_slice())?;
        let (x2, ld2) = model.inverse_batch(self.s2.as_slice())?;
        let a1 = self.base_at_1.iter().zip(&ld1).map(|(l, j)| l - j).collect();
        let b1 = y1.chunks_exact(d).map(|y| self.q2.log_unnorm(y)).collect();
        let a2 = x2.chunks_exact(d).zip(&ld2).map(|(x, j)| self.base.log_unnorm(x) + j).collect();
        Ok(self.combine(a1, b1, a2, log_r)?.value)
    }

    fn value_and_gradient(&self, theta: &[f64], log_r: f64) -> Result<GradientRecord> {
        let model = self.model.with_theta(theta)?;
        let d = model.dim();
        let (n1, n2) = (self.n1(), self.n2());
        let (y1, ld1, tape1) = model.forward_tape(self.s1.as_slice())?;
        let (x2, ld2, tape2) = model.inverse_tape(self.s2.as_slice())?;
        let mut grad_q2 = vec![0.0; n1 * d];
        let mut grad_q1 = vec![0.0; n2 * d];
        let a1: Vec<f64> = self.base_at_1.iter().zip(&ld1).map(|(l, j)| l - j).collect();
        let b1: Vec<f64> = (0..n1)
            .map(|i| self.q2.log_unnorm_grad(&y1[i * d..(i + 1) * d], &mut grad_q2[i * d..(i + 1) * d]))
            .collect();
        let a2: Vec<f64> = (0..n2)
            .map(|i| self.base.log_unnorm_grad(&x2[i * d..(i + 1) * d], &mut grad_q1[i * d..(i + 1) * d]) + ld2[i])
            .collect();
        let ev = self.combine(a1, b1, a2, log_r)?;
        let ratios = LogRatios::new(
            ev.a1.iter().zip(&ev.b1).map(|(a, b)| a - b).collect(),
            ev.a2.iter().zip(&self.q2_at_2).map(|(a, b)| a - b).collect(),
        )?;

        // derivatives with respect to the log-odds ℓ of each sample
        let (dl1, dl2) = match self.kind {
            ObjectiveKind::Hybrid => {
                let pi = self.pi;
                let l1 = harmonic_log_odds(pi, ratios.at1(), log_r);
                let l2 = harmonic_log_odds(pi, ratios.at2(), log_r);
                let c1 = -(pi * n1 as f64).ln();
                let c2 = -((1.0 - pi) * n2 as f64).ln();
                let t1: Vec<f64> = l1.iter().map(|l| c1 - 2.0 * softplus(*l)).collect();
                let t2: Vec<f64> = l2.iter().map(|l| c2 - 2.0 * softplus(-l)).collect();
                let lse = log_sum_exp(&[log_sum_exp(&t1), log_sum_exp(&t2)]);
                (
                    l1.iter().zip(&t1).map(|(l, t)| 2.0 * (t - lse).exp() * sigmoid(*l)).collect::<Vec<_>>(),
                    l2.iter().zip(&t2).map(|(l, t)| -2.0 * (t - lse).exp() * sigmoid(-l)).collect::<Vec<_>>(),
                )
            }
            ObjectiveKind::RawHarmonic => {
                let (_, d1, d2) = raw_harmonic(self.pi, &ratios, log_r);
                (d1, d2)
            }
        };
        let d_log_r = -(dl1.iter().sum::<f64>() + dl2.iter().sum::<f64>());
        let (k1, k2) = match self.kind {
            ObjectiveKind::Hybrid => (self.beta1 / n1 as f64, self.beta2 / n2 as f64),
            ObjectiveKind::RawHarmonic => (0.0, 0.0),
        };

        // q₁ side: ∂/∂a₁ = ∂/∂ℓ + β₁/n₁, ∂/∂b₁ = −∂/∂a₁; a₁ carries −log-det
        let mut g_y1 = grad_q2;
        let mut g_ld1 = Vec::with_capacity(n1);
        for i in 0..n1 {
            let da = dl1[i] + k1;
            g_y1[i * d..(i + 1) * d].iter_mut().for_each(|g| *g *= -da);
            g_ld1.push(-da);
        }
        // q₂ side: ∂/∂a₂ = ∂/∂ℓ − β₂/n₂; a₂ carries +log-det
        let mut g_x2 = grad_q1;
        let mut g_ld2 = Vec::with_capacity(n2);
        for i in 0..n2 {
            let da = dl2[i] - k2;
            g_x2[i * d..(i + 1) * d].iter_mut().for_each(|g| *g *= da);
            g_ld2.push(da);
        }
        let mut d_theta = vec![0.0; model.param_count()];
        model.backward(&tape1, &g_y1, &g_ld1, &mut d_theta)?;
        model.backward(&tape2, &g_x2, &g_ld2, &mut d_theta)?;
        Ok(GradientRecord { value: ev.value, d_theta, d_log_r })
    }

    fn block_of(&self, index: usize) -> String {
        let mut start = 0;
        for (k, layer) in self.model.layers().iter().enumerate() {
            if index < start + layer.param_count() {
                return format!("coupling layer {k}");
            }
            start += layer.param_count();
        }
        format!("theta[{index}]")
    }
}

/// Evaluates the hybrid objective at `(θ, log r̃)`.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_objective<D1, D2>(
    theta: &[f64],
    log_r_tilde: f64,
    model: &FlowModel,
    base_q1: &D1,
    q2: &D2,
    s1: &SampleBatch,
    s2: &SampleBatch,
    beta1: f64,
    beta2: f64,
    pi: f64,
) -> Result<f64>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    HybridObjective::new(model, base_q1, q2, s1, s2, beta1, beta2, pi)?.value(theta, log_r_tilde)
}

/// `log r̃` maximizing `Ĝ_π` for fixed `θ`, over the default bracket.
pub fn maximize_log_r<D1, D2>(obj: &HybridObjective<'_, D1, D2>, theta: &[f64]) -> Result<DivergenceEstimate>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    estimate_harmonic_divergence(obj.pi, &obj.log_ratios(theta)?, None)
}

struct Step {
    d_theta: Vec<f64>,
    d_log_r: f64,
}

fn epoch_steps<D1, D2>(
    obj: &HybridObjective<'_, D1, D2>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    theta: &mut Vec<f64>,
    log_r: &mut f64,
    opt_phi: &mut OptimizerState,
    opt_r: &mut OptimizerState,
    full: Option<GradientRecord>,
) -> Result<()>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    let mut apply = |sub: &HybridObjective<'_, D1, D2>, pre: Option<GradientRecord>, theta: &mut Vec<f64>, log_r: &mut f64| -> Result<()> {
        let rec = match pre {
            Some(r) => r,
            None => objective_with_gradients(sub, theta, *log_r)?,
        };
        let mut step = Step { d_theta: rec.d_theta, d_log_r: rec.d_log_r };
        clip_norm(&mut step.d_theta, config.grad_clip);
        opt_phi.apply(&step.d_theta, theta)?;
        if config.update_order == UpdateOrder::Alternating {
            step.d_log_r = objective_with_gradients(sub, theta, *log_r)?.d_log_r;
        }
        // ascent in log r̃
        let mut lr = [*log_r];
        opt_r.apply(&[-step.d_log_r], &mut lr)?;
        *log_r = lr[0];
        Ok(())
    };
    match config.minibatch {
        None => apply(obj, full, theta, log_r),
        Some(m) => {
            let mut rows1: Vec<usize> = (0..obj.n1()).collect();
            let mut rows2: Vec<usize> = (0..obj.n2()).collect();
            rows1.shuffle(rng);
            rows2.shuffle(rng);
            let batches = obj.n1().max(obj.n2()).div_ceil(m);
            let per1 = obj.n1().div_ceil(batches);
            let per2 = obj.n2().div_ceil(batches);
            for b in 0..batches {
                let r1 = &rows1[(b * per1).min(obj.n1())..((b + 1) * per1).min(obj.n1())];
                let r2 = &rows2[(b * per2).min(obj.n2())..((b + 1) * per2).min(obj.n2())];
                if r1.is_empty() || r2.is_empty() {
                    continue;
                }
                let sub = obj.subset(r1, r2)?;
                apply(&sub, None, theta, log_r)?;
            }
            Ok(())
        }
    }
}

/// Alternating gradient training of `(φ, log r̃)`: descent in `φ`, ascent in
/// `log r̃`, until both the objective and `log r̃` change by less than their
/// tolerances between consecutive epochs.
///
/// A failed epoch (non-finite density, flow or gradient) restores the last
/// finite state and halves both learning rates; three in a row abort with
/// [`Error::Diverged`].
pub fn train<D1, D2>(
    config: &TrainConfig,
    base_q1: &D1,
    q2: &D2,
    train1: &SampleBatch,
    train2: &SampleBatch,
    model: &FlowModel,
) -> Result<TrainReport>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    config.validate()?;
    let pi = train2.len() as f64 / (train1.len() + train2.len()) as f64;
    let obj = HybridObjective::new(model, base_q1, q2, train1, train2, config.beta1, config.beta2, pi)?;
    let mut theta = model.theta().to_vec();
    let mut log_r = match config.init_log_r {
        Some(v) => v,
        None => maximize_log_r(&obj, &theta)?.maximizer_log_r,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt_phi = OptimizerState::new(theta.len(), config.eta_phi);
    let mut opt_r = OptimizerState::new(1, config.eta_r);

    let full_batch = config.minibatch.is_none();
    let mut current = if full_batch {
        let rec = objective_with_gradients(&obj, &theta, log_r)?;
        (rec.value, Some(rec))
    } else {
        (obj.value(&theta, log_r)?, None)
    };
    let mut objective_trace = vec![current.0];
    let mut r_trace = vec![log_r];
    let mut failures = 0;
    let mut stopped_by = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let saved = (theta.clone(), log_r, opt_phi.clone(), opt_r.clone());
        let outcome = epoch_steps(&obj, config, &mut rng, &mut theta, &mut log_r, &mut opt_phi, &mut opt_r, current.1.take())
            .and_then(|_| {
                if full_batch {
                    objective_with_gradients(&obj, &theta, log_r).map(|rec| (rec.value, Some(rec)))
                } else {
                    obj.value(&theta, log_r).and_then(|v| {
                        if v.is_finite() {
                            Ok((v, None))
                        } else {
                            Err(Error::Gradient { block: "objective value".into() })
                        }
                    })
                }
            });
        match outcome {
            Ok(next) => {
                failures = 0;
                current = next;
            }
            Err(Error::Parameter(m)) => return Err(Error::Parameter(m)),
            Err(_) => {
                failures += 1;
                if failures >= 3 {
                    return Err(Error::Diverged { epoch });
                }
                theta = saved.0;
                log_r = saved.1;
                opt_phi = saved.2;
                opt_r = saved.3;
                opt_phi.learning_rate *= 0.5;
                opt_r.learning_rate *= 0.5;
                current.1 = if full_batch { Some(objective_with_gradients(&obj, &theta, log_r)?) } else { None };
            }
        }
        let prev_value = *objective_trace.last().unwrap();
        let prev_r = *r_trace.last().unwrap();
        objective_trace.push(current.0);
        r_trace.push(log_r);
        if (current.0 - prev_value).abs() <= config.eps1 && (log_r - prev_r).abs() <= config.eps2 {
            stopped_by = StopReason::ObjectiveAndRStable;
            break;
        }
    }
    Ok(TrainReport {
        final_theta: theta,
        final_log_r_tilde: log_r,
        epochs_run: objective_trace.len() - 1,
        objective_trace,
        r_trace,
        stopped_by,
    })
}

/// Log ratios of `(q̃₁^(φ), q̃₂)` at `{T(ω′₁)}` and `{ω′₂}` for a fixed flow.
pub fn transformed_log_ratios<D1, D2>(
    model: &FlowModel,
    base_q1: &D1,
    q2: &D2,
    est1: &SampleBatch,
    est2: &SampleBatch,
) -> Result<LogRatios>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    if model.dim() != base_q1.dim() || model.dim() != q2.dim() {
        return Err(Error::Shape("flow and density dimensions differ".into()));
    }
    let d = model.dim();
    let (y1, ld1) = model.forward_batch(est1.as_slice())?;
    let (x2, ld2) = model.inverse_batch(est2.as_slice())?;
    let base1 = log_unnorm_batch(base_q1, est1)?;
    let at2_q2 = log_unnorm_batch(q2, est2)?;
    let at1 = (0..est1.len()).map(|i| base1[i] - ld1[i] - q2.log_unnorm(&y1[i * d..(i + 1) * d])).collect();
    let at2 = (0..est2.len()).map(|i| base_q1.log_unnorm(&x2[i * d..(i + 1) * d]) + ld2[i] - at2_q2[i]).collect();
    LogRatios::new(at1, at2)
}

/// Optimal Bridge on held-out samples through a fixed flow, started at
/// `log_r0`, with `RE²` from the same samples.
///
/// If the iteration from `log_r0` does not converge (a training-time `log r̃`
/// far from the fixed point moves only slowly), it is rerun from the
/// geometric estimate; the fixed point itself does not depend on the start.
pub fn estimate_with_flow<D1, D2>(
    model: &FlowModel,
    base_q1: &D1,
    q2: &D2,
    est1: &SampleBatch,
    est2: &SampleBatch,
    log_r0: f64,
) -> Result<BridgeResult>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    let ratios = transformed_log_ratios(model, base_q1, q2, est1, est2)?;
    let first = optimal_bridge_from(&ratios, IterationOptions::starting_at(log_r0))?;
    if first.converged {
        return Ok(first);
    }
    let second = optimal_bridge_from(&ratios, IterationOptions::default())?;
    Ok(if second.converged { second } else { first })
}

#[derive(Debug, Clone)]
pub struct FgbOutcome {
    pub bridge: BridgeResult,
    pub report: TrainReport,
    pub model: FlowModel,
    /// Identity of the training/estimating partition, for plotting and audits.
    pub train1: SampleBatch,
    pub estimate1: SampleBatch,
    pub train2: SampleBatch,
    pub estimate2: SampleBatch,
}

/// Splits both sample sets, trains on the first parts and returns the
/// optimal Bridge estimate computed on the second parts only.
pub fn fgb_estimate<D1, D2>(
    config: &TrainConfig,
    split_fraction: f64,
    base_q1: &D1,
    q2: &D2,
    all1: &SampleBatch,
    all2: &SampleBatch,
    model: &FlowModel,
    rng: &mut dyn RngCore,
) -> Result<FgbOutcome>
where
    D1: TargetDensity + ?Sized,
    D2: TargetDensity + ?Sized,
{
    let (train1, estimate1) = split_samples(all1, split_fraction, rng)?;
    let (train2, estimate2) = split_samples(all2, split_fraction, rng)?;
    let report = train(config, base_q1, q2, &train1, &train2, model)?;
    let trained = model.with_theta(&report.final_theta)?;
    let bridge = estimate_with_flow(&trained, base_q1, q2, &estimate1, &estimate2, report.final_log_r_tilde)?;
    Ok(FgbOutcome { bridge, report, model: trained, train1, estimate1, train2, estimate2 })
}
