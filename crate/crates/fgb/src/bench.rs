//! Repeated-run benchmark protocols.
//!
//! Every repetition owns a ChaCha8 stream: the generator is seeded with the
//! run seed and switched to stream `rep`, so results do not depend on how
//! repetitions are scheduled across threads. Repetitions run on the current
//! rayon pool and are collected in order.

use fgb_core::bridge::{
    geometric_bridge, importance_sampling_bridge, optimal_bridge, split_samples, BridgeResult, IsDirection,
    IterationOptions,
};
use fgb_core::densities::{sample, TargetDensity};
use fgb_core::fgb::{estimate_with_flow, train, FgbOutcome, TrainReport};
use fgb_core::flow::{build_flow_with_mask, FlowModel};
use fgb_core::SampleBatch;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fgb,
    OptimalIdentity,
    Geometric,
    Is,
    Ris,
}

impl Method {
    pub fn from_name(s: &str) -> AppResult<Self> {
        match s {
            "fgb" => Ok(Method::Fgb),
            "optimal_identity" => Ok(Method::OptimalIdentity),
            "geometric" => Ok(Method::Geometric),
            "is" => Ok(Method::Is),
            "ris" => Ok(Method::Ris),
            other => Err(AppError::Config(format!(
                "bench.methods: unknown method `{other}` (expected fgb, optimal_identity, geometric, is or ris)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Fgb => "fgb",
            Method::OptimalIdentity => "optimal_identity",
            Method::Geometric => "geometric",
            Method::Is => "is",
            Method::Ris => "ris",
        }
    }
}

/// Generator for repetition `stream` of a run seeded with `seed`.
pub fn rep_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream reserved for the single training run of the fixed-flow study.
pub const TRAINING_STREAM: u64 = u64::MAX;

/// `log Z₁ − log Z₂` in the estimator's orientation.
pub fn true_log_ratio(q1: &dyn TargetDensity, q2: &dyn TargetDensity) -> AppResult<f64> {
    match (q1.exact_log_z(), q2.exact_log_z()) {
        (Some(a), Some(b)) => Ok(a - b),
        _ => Err(AppError::Config("benchmarks need targets with a closed-form normalizing constant".into())),
    }
}

/// Split, train (keeping the restart with the lowest final objective) and
/// estimate on the held-out parts.
pub fn run_fgb(
    cfg: &RunConfig,
    q1: &dyn TargetDensity,
    q2: &dyn TargetDensity,
    all1: &SampleBatch,
    all2: &SampleBatch,
    rng: &mut dyn RngCore,
) -> AppResult<FgbOutcome> {
    let (train1, estimate1) = split_samples(all1, cfg.split, rng)?;
    let (train2, estimate2) = split_samples(all2, cfg.split, rng)?;
    let mask = cfg.flow.mask_pattern()?;
    let mut best: Option<(TrainReport, FlowModel)> = None;
    let mut first_error = None;
    for _ in 0..cfg.restarts {
        let model = build_flow_with_mask(q1.dim(), cfg.flow.layers, &cfg.flow.hidden, mask, rng)?;
        let config = cfg.train.to_train_config(rng.next_u64())?;
        match train(&config, q1, q2, &train1, &train2, &model) {
            Ok(report) => {
                let last = *report.objective_trace.last().expect("trace holds the initial value");
                let better = match &best {
                    Some((b, _)) => last < *b.objective_trace.last().unwrap(),
                    None => true,
                };
                if better {
                    best = Some((report, model));
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((report, model)) = best else {
        return Err(first_error.expect("at least one restart ran").into());
    };
    let trained = model.with_theta(&report.final_theta)?;
    let bridge = estimate_with_flow(&trained, q1, q2, &estimate1, &estimate2, report.final_log_r_tilde)?;
    Ok(FgbOutcome { bridge, report, model: trained, train1, estimate1, train2, estimate2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepOutcome {
    pub rep: u64,
    /// `log(Z1/Z2)` estimate; absent when the repetition failed.
    pub log_r_hat: Option<f64>,
    /// Estimated RE²; absent for methods without one or when saturated.
    pub re2: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl RepOutcome {
    fn failed(&self) -> bool {
        self.error.is_some() || !self.converged
    }

    fn from_bridge(rep: u64, cfg: &RunConfig, b: AppResult<BridgeResult>) -> Self {
        match b {
            Ok(b) => RepOutcome {
                rep,
                log_r_hat: Some(cfg.orient(b.log_r_hat)),
                re2: b.re2_estimate,
                converged: b.converged,
                error: None,
            },
            Err(e) => RepOutcome { rep, log_r_hat: None, re2: None, converged: false, error: Some(e.to_string()) },
        }
    }
}

/// Mean and plug-in standard error over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            f64::NAN
        };
        Some(MeanSe { mean, se, count: xs.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionSummary {
    pub method: String,
    pub truth: f64,
    /// MSE of `log r̂` against the truth, over non-failed repetitions.
    pub mc_mse: Option<MeanSe>,
    /// Mean of the per-repetition RE² estimates that exist.
    pub mean_re2: Option<MeanSe>,
    pub failures: usize,
    pub reps: Vec<RepOutcome>,
}

impl RepetitionSummary {
    pub fn from_reps(method: &str, truth: f64, reps: Vec<RepOutcome>) -> Self {
        let ok: Vec<&RepOutcome> = reps.iter().filter(|r| !r.failed()).collect();
        let sq: Vec<f64> = ok.iter().filter_map(|r| r.log_r_hat).map(|l| (l - truth).powi(2)).collect();
        let re2: Vec<f64> = ok.iter().filter_map(|r| r.re2).collect();
        RepetitionSummary {
            method: method.into(),
            truth,
            mc_mse: MeanSe::of(&sq),
            mean_re2: MeanSe::of(&re2),
            failures: reps.len() - ok.len(),
            reps,
        }
    }
}

fn draw(cfg: &RunConfig, q1: &dyn TargetDensity, q2: &dyn TargetDensity, rng: &mut ChaCha8Rng) -> AppResult<(SampleBatch, SampleBatch)> {
    let (n1, n2) = cfg.sizes();
    Ok((sample(q1, rng, n1)?, sample(q2, rng, n2)?))
}

fn one_rep(cfg: &RunConfig, method: Method, q1: &dyn TargetDensity, q2: &dyn TargetDensity, rep: u64) -> RepOutcome {
    let mut rng = rep_rng(cfg.seed, rep);
    let result = draw(cfg, q1, q2, &mut rng).and_then(|(s1, s2)| -> AppResult<BridgeResult> {
        Ok(match method {
            Method::Fgb => run_fgb(cfg, q1, q2, &s1, &s2, &mut rng)?.bridge,
            Method::OptimalIdentity => optimal_bridge(q1, q2, &s1, &s2, IterationOptions::default())?,
            Method::Geometric => geometric_bridge(q1, q2, &s1, &s2)?,
            Method::Is => importance_sampling_bridge(IsDirection::Q2Proposal, q1, q2, &s2)?,
            Method::Ris => importance_sampling_bridge(IsDirection::Q1Proposal, q1, q2, &s1)?,
        })
    });
    RepOutcome::from_bridge(rep, cfg, result)
}

/// `reps` independent repetitions of `method`, each on fresh samples of
/// sizes `(n1, n2)`. Repetition `i` draws the same samples for every method.
pub fn run_repetitions(cfg: &RunConfig, method: Method, reps: usize) -> AppResult<RepetitionSummary> {
    let (q1, q2) = cfg.targets()?;
    let truth = true_log_ratio(&*q1, &*q2)?;
    let outcomes: Vec<RepOutcome> =
        (0..reps as u64).into_par_iter().map(|rep| one_rep(cfg, method, &*q1, &*q2, rep)).collect();
    Ok(RepetitionSummary::from_reps(method.name(), cfg.orient(truth), outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedFlowStudy {
    pub n_prime: usize,
    pub summary: RepetitionSummary,
}

impl FixedFlowStudy {
    /// `mean_re2 / mc_mse`, when both exist.
    pub fn agreement_ratio(&self) -> Option<f64> {
        Some(self.summary.mean_re2?.mean / self.summary.mc_mse?.mean)
    }
}

/// Holds the flow fixed and redraws `n_prime` estimating samples per side in
/// each repetition; the optimal Bridge starts at `log_r0`.
#[allow(clippy::too_many_arguments)]
pub fn fixed_flow_re2_study(
    model: &FlowModel,
    base_q1: &dyn TargetDensity,
    q2: &dyn TargetDensity,
    n_prime: usize,
    reps: usize,
    seed: u64,
    log_r0: f64,
) -> AppResult<FixedFlowStudy> {
    let truth = true_log_ratio(base_q1, q2)?;
    let outcomes: Vec<RepOutcome> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(seed, rep);
            let result = (|| -> AppResult<BridgeResult> {
                let e1 = sample(base_q1, &mut rng, n_prime)?;
                let e2 = sample(q2, &mut rng, n_prime)?;
                Ok(estimate_with_flow(model, base_q1, q2, &e1, &e2, log_r0)?)
            })();
            match result {
                Ok(b) => RepOutcome { rep, log_r_hat: Some(b.log_r_hat), re2: b.re2_estimate, converged: b.converged, error: None },
                Err(e) => RepOutcome { rep, log_r_hat: None, re2: None, converged: false, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(FixedFlowStudy { n_prime, summary: RepetitionSummary::from_reps("fgb_fixed_flow", truth, outcomes) })
}

/// Trains once on `(n1, n2)` samples from the reserved training stream, then
/// runs [`fixed_flow_re2_study`] with `bench.n_prime` and `bench.reps`.
pub fn run_fixed_flow(cfg: &RunConfig) -> AppResult<(FgbOutcome, FixedFlowStudy)> {
    let (q1, q2) = cfg.targets()?;
    let mut rng = rep_rng(cfg.seed, TRAINING_STREAM);
    let (s1, s2) = draw(cfg, &*q1, &*q2, &mut rng)?;
    let trained = run_fgb(cfg, &*q1, &*q2, &s1, &s2, &mut rng)?;
    let mut study = fixed_flow_re2_study(
        &trained.model,
        &*q1,
        &*q2,
        cfg.bench.n_prime,
        cfg.bench.reps,
        cfg.seed,
        trained.report.final_log_r_tilde,
    )?;
    if cfg.swap {
        let s = &mut study.summary;
        s.truth = -s.truth;
        for r in &mut s.reps {
            r.log_r_hat = r.log_r_hat.map(|l| -l);
        }
    }
    Ok((trained, study))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementRep {
    pub rep: u64,
    pub trained_re2: Option<f64>,
    /// `None` when the untransformed pair saturates, i.e. RE² is unbounded.
    pub identity_re2: Option<f64>,
    pub trained_wins: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementStudy {
    pub wins: usize,
    pub failures: usize,
    pub reps: Vec<ImprovementRep>,
}

/// Per repetition: train on the training split, then compare the estimated
/// RE² of the trained flow with that of the identity flow on the same
/// held-out samples. A saturated identity RE² counts as infinite.
pub fn improvement_study(cfg: &RunConfig) -> AppResult<ImprovementStudy> {
    let (q1, q2) = cfg.targets()?;
    let reps: Vec<ImprovementRep> = (0..cfg.bench.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(cfg.seed, rep);
            let result = (|| -> AppResult<(Option<f64>, Option<f64>)> {
                let (s1, s2) = draw(cfg, &*q1, &*q2, &mut rng)?;
                let out = run_fgb(cfg, &*q1, &*q2, &s1, &s2, &mut rng)?;
                let identity = optimal_bridge(&*q1, &*q2, &out.estimate1, &out.estimate2, IterationOptions::default())?;
                Ok((out.bridge.re2_estimate, identity.re2_estimate))
            })();
            match result {
                Ok((t, i)) => ImprovementRep {
                    rep,
                    trained_re2: t,
                    identity_re2: i,
                    trained_wins: matches!((t, i), (Some(t), Some(i)) if t <= i) || matches!((t, i), (Some(_), None)),
                    error: None,
                },
                Err(e) => ImprovementRep { rep, trained_re2: None, identity_re2: None, trained_wins: false, error: Some(e.to_string()) },
            }
        })
        .collect();
    Ok(ImprovementStudy {
        wins: reps.iter().filter(|r| r.trained_wins).count(),
        failures: reps.iter().filter(|r| r.error.is_some()).count(),
        reps,
    })
}
