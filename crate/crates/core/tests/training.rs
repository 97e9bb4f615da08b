use std::collections::HashSet;
use std::sync::Mutex;

use fgb_core::densities::{gaussian_target, ring_mixture_target, sample, RingMixture, RingMixtureParams, TargetDensity};
use fgb_core::divergences::{make_generator, quadrature_divergence_oracle, GeneratorKind};
use fgb_core::fgb::{
    estimate_with_flow, fgb_estimate, hybrid_objective, maximize_log_r, train, HybridObjective, StopReason,
    TrainConfig, UpdateOrder,
};
use fgb_core::flow::{build_flow_with_mask, FlowModel, MaskPattern};
use fgb_core::grad::{objective_with_gradients, Objective};
use fgb_core::optimize::grid_golden_maximize;
use fgb_core::{Error, Result, SampleBatch};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn perturbed_flow(dim: usize, seed: u64) -> FlowModel {
    let mut r = rng(seed);
    let m = build_flow_with_mask(dim, 2, &[8], MaskPattern::Interleaved, &mut r).unwrap();
    let theta: Vec<f64> = m.theta().iter().map(|t| t + 0.1 * r.sample::<f64, _>(StandardNormal)).collect();
    m.with_theta(&theta).unwrap()
}

fn ring_problem(n: usize, seed: u64) -> (RingMixture, RingMixture, SampleBatch, SampleBatch) {
    let q1 = ring_mixture_target(RingMixtureParams::benchmark_first(4)).unwrap();
    let q2 = ring_mixture_target(RingMixtureParams::benchmark_second(4)).unwrap();
    let mut r = rng(seed);
    let s1 = sample(&q1, &mut r, n).unwrap();
    let s2 = sample(&q2, &mut r, n).unwrap();
    (q1, q2, s1, s2)
}

#[test]
fn identical_densities_with_identity_flow_give_zero() {
    let q = gaussian_target(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
    let model = FlowModel::zeros(2, 2, &[4], MaskPattern::Halves).unwrap();
    let mut r = rng(1);
    let s1 = sample(&q, &mut r, 300).unwrap();
    let s2 = sample(&q, &mut r, 200).unwrap();
    let l = hybrid_objective(model.theta(), 0.0, &model, &q, &q, &s1, &s2, 0.0, 0.0, 0.4).unwrap();
    assert_eq!(l, 0.0);
}

#[test]
fn hybrid_value_tracks_the_harmonic_divergence() {
    let q1 = gaussian_target(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let q2 = gaussian_target(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
    let model = FlowModel::zeros(2, 2, &[4], MaskPattern::Halves).unwrap();
    let mut r = rng(2);
    let n = 50_000;
    let s1 = sample(&q1, &mut r, n).unwrap();
    let s2 = sample(&q2, &mut r, n).unwrap();
    let truth = -0.5 * 2f64.ln();
    let l = hybrid_objective(model.theta(), truth, &model, &q1, &q2, &s1, &s2, 0.0, 0.0, 0.5).unwrap();
    let h = quadrature_divergence_oracle(&make_generator(GeneratorKind::Harmonic(0.5)).unwrap(), &q1, &q2, (-15.0, 15.0)).unwrap();
    // SE of 1 − Ĝ is below 2e-3 at this n for this pair
    assert!(((-l).exp() - (1.0 - h)).abs() < 6e-3, "{} vs {}", (-l).exp(), 1.0 - h);
}

#[test]
fn log_r_maximizer_is_independent_of_the_likelihood_weights() {
    let (q1, q2, s1, s2) = ring_problem(300, 3);
    let model = perturbed_flow(4, 4);
    let theta = model.theta().to_vec();
    let base = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.0, 0.0, 0.5).unwrap();
    let target = maximize_log_r(&base, &theta).unwrap().maximizer_log_r;
    for beta in [0.0, 0.05, 0.5, 2.0] {
        let obj = HybridObjective::new(&model, &q1, &q2, &s1, &s2, beta, 2.0 * beta, 0.5).unwrap();
        let best = grid_golden_maximize(|lr| obj.value(&theta, lr).unwrap(), target - 10.0, target + 10.0, 200, 1e-10);
        assert!((best.x - target).abs() < 1e-6, "β={beta}: {} vs {target}", best.x);
    }
}

#[test]
fn log_r_gradient_vanishes_at_the_maximizer() {
    let (q1, q2, s1, s2) = ring_problem(300, 5);
    let model = perturbed_flow(4, 6);
    let obj = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.05, 0.05, 0.5).unwrap();
    let best = maximize_log_r(&obj, model.theta()).unwrap();
    let rec = objective_with_gradients(&obj, model.theta(), best.maximizer_log_r).unwrap();
    assert!(rec.d_log_r.abs() < 1e-5, "{}", rec.d_log_r);
}

#[test]
fn hybrid_gradient_is_a_rescaled_raw_gradient() {
    // well-overlapping pair, so 1 − Ĝ carries no cancellation in the raw form
    let q1 = gaussian_target(&[0.0; 4], &[1.0; 4]).unwrap();
    let q2 = gaussian_target(&[0.5, 0.0, -0.3, 0.0], &[1.5, 1.0, 0.8, 1.2]).unwrap();
    let mut r = rng(7);
    let s1 = sample(&q1, &mut r, 200).unwrap();
    let s2 = sample(&q2, &mut r, 200).unwrap();
    let model = perturbed_flow(4, 8);
    let theta = model.theta().to_vec();
    let hybrid = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.0, 0.0, 0.5).unwrap();
    let raw = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.0, 0.0, 0.5).unwrap().raw();
    for lr in [-1.0, 0.3, 2.0] {
        let h = objective_with_gradients(&hybrid, &theta, lr).unwrap();
        let g = objective_with_gradients(&raw, &theta, lr).unwrap();
        // −log(1 − Ĝ) has derivative Ĝ′/(1 − Ĝ)
        let one_minus = 1.0 - g.value;
        assert!((h.value + one_minus.ln()).abs() < 1e-10);
        for (a, b) in h.d_theta.iter().zip(&g.d_theta) {
            assert!((a - b / one_minus).abs() <= 1e-10 * a.abs().max(1.0));
        }
        assert!((h.d_log_r - g.d_log_r / one_minus).abs() <= 1e-10 * h.d_log_r.abs().max(1.0));
    }
}

#[test]
fn training_on_identical_densities_keeps_log_r_near_zero() {
    let q = gaussian_target(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let mut r = rng(9);
    let s1 = sample(&q, &mut r, 10_000).unwrap();
    let s2 = sample(&q, &mut r, 10_000).unwrap();
    let model = build_flow_with_mask(2, 2, &[4], MaskPattern::Halves, &mut r).unwrap();
    let config = TrainConfig { max_epochs: 30, ..TrainConfig::default() };
    let report = train(&config, &q, &q, &s1, &s2, &model).unwrap();
    assert!(report.final_log_r_tilde.abs() < 0.05, "{}", report.final_log_r_tilde);
}

#[test]
fn training_lowers_the_objective() {
    let (q1, q2, s1, s2) = ring_problem(400, 10);
    let mut r = rng(11);
    let model = build_flow_with_mask(4, 2, &[8], MaskPattern::Interleaved, &mut r).unwrap();
    let config = TrainConfig { eta_phi: 1e-2, max_epochs: 60, ..TrainConfig::default() };
    let report = train(&config, &q1, &q2, &s1, &s2, &model).unwrap();
    let first = report.objective_trace[0];
    let last = *report.objective_trace.last().unwrap();
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn traces_record_every_epoch() {
    let (q1, q2, s1, s2) = ring_problem(100, 12);
    let mut r = rng(13);
    let model = build_flow_with_mask(4, 2, &[4], MaskPattern::Halves, &mut r).unwrap();
    let config = TrainConfig { eps1: 1e-300, eps2: 1e-300, max_epochs: 7, ..TrainConfig::default() };
    let report = train(&config, &q1, &q2, &s1, &s2, &model).unwrap();
    assert_eq!(report.stopped_by, StopReason::MaxEpochs);
    assert_eq!(report.epochs_run, 7);
    assert_eq!(report.objective_trace.len(), 8);
    assert_eq!(report.r_trace.len(), 8);
    assert_eq!(*report.r_trace.last().unwrap(), report.final_log_r_tilde);

    let loose = TrainConfig { eps1: 1e3, eps2: 1e3, ..TrainConfig::default() };
    let report = train(&loose, &q1, &q2, &s1, &s2, &model).unwrap();
    assert_eq!(report.stopped_by, StopReason::ObjectiveAndRStable);
    assert_eq!(report.epochs_run, 1);
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let (q1, q2, s1, s2) = ring_problem(120, 14);
    let mut r = rng(15);
    let model = build_flow_with_mask(4, 2, &[4], MaskPattern::Halves, &mut r).unwrap();
    for order in [UpdateOrder::Simultaneous, UpdateOrder::Alternating] {
        let config = TrainConfig { minibatch: Some(32), max_epochs: 5, seed: 99, update_order: order, ..TrainConfig::default() };
        let a = train(&config, &q1, &q2, &s1, &s2, &model).unwrap();
        let b = train(&config, &q1, &q2, &s1, &s2, &model).unwrap();
        assert_eq!(a, b);
        let c = train(&TrainConfig { seed: 100, ..config.clone() }, &q1, &q2, &s1, &s2, &model).unwrap();
        assert_ne!(a.final_theta, c.final_theta);
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let (q1, q2, s1, s2) = ring_problem(20, 16);
    let model = FlowModel::zeros(4, 1, &[2], MaskPattern::Halves).unwrap();
    for bad in [
        TrainConfig { eta_phi: 0.0, ..TrainConfig::default() },
        TrainConfig { beta1: -1.0, ..TrainConfig::default() },
        TrainConfig { minibatch: Some(0), ..TrainConfig::default() },
        TrainConfig { eps2: 0.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(train(&bad, &q1, &q2, &s1, &s2, &model), Err(Error::Parameter(_))));
    }
    let wrong = FlowModel::zeros(2, 1, &[2], MaskPattern::Halves).unwrap();
    assert!(matches!(train(&TrainConfig::default(), &q1, &q2, &s1, &s2, &wrong), Err(Error::Shape(_))));
}

/// Wraps a density and records every point it is evaluated at.
struct Recording<D> {
    inner: D,
    seen: Mutex<HashSet<Vec<u64>>>,
}

impl<D: TargetDensity> Recording<D> {
    fn new(inner: D) -> Self {
        Recording { inner, seen: Mutex::new(HashSet::new()) }
    }

    fn note(&self, x: &[f64]) {
        self.seen.lock().unwrap().insert(x.iter().map(|v| v.to_bits()).collect());
    }

    fn saw(&self, x: &[f64]) -> bool {
        self.seen.lock().unwrap().contains(&x.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    }
}

impl<D: TargetDensity> TargetDensity for Recording<D> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn name(&self) -> String {
        self.inner.name()
    }
    fn log_unnorm(&self, x: &[f64]) -> f64 {
        self.note(x);
        self.inner.log_unnorm(x)
    }
    fn log_unnorm_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.note(x);
        self.inner.log_unnorm_grad(x, grad)
    }
    fn exact_log_z(&self) -> Option<f64> {
        self.inner.exact_log_z()
    }
    fn has_sampler(&self) -> bool {
        self.inner.has_sampler()
    }
    fn sample_point(&self, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<()> {
        self.inner.sample_point(rng, out)
    }
}

#[test]
fn training_never_touches_the_estimation_samples() {
    let (q1, q2, s1, s2) = ring_problem(200, 17);
    let mut r = rng(18);
    let model = build_flow_with_mask(4, 2, &[4], MaskPattern::Interleaved, &mut r).unwrap();
    let config = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
    let out = fgb_estimate(&config, 0.5, &q1, &q2, &s1, &s2, &model, &mut r).unwrap();

    assert_eq!(out.train1.len() + out.estimate1.len(), s1.len());
    assert_eq!(out.train2.len() + out.estimate2.len(), s2.len());

    let rq1 = Recording::new(q1.clone());
    let rq2 = Recording::new(q2.clone());
    let report = train(&config, &rq1, &rq2, &out.train1, &out.train2, &model).unwrap();
    assert_eq!(report, out.report);
    for row in out.estimate1.rows() {
        assert!(!rq1.saw(row));
    }
    for row in out.estimate2.rows() {
        assert!(!rq2.saw(row));
    }
    for row in out.train2.rows().take(10) {
        assert!(rq2.saw(row));
    }

    let again = estimate_with_flow(&out.model, &q1, &q2, &out.estimate1, &out.estimate2, report.final_log_r_tilde).unwrap();
    assert_eq!(again.log_r_hat, out.bridge.log_r_hat);
}

fn demo_traces(seed: u64, beta: f64) -> (Vec<f64>, Vec<f64>, StopReason) {
    let q1 = ring_mixture_target(RingMixtureParams::benchmark_first(12)).unwrap();
    let q2 = ring_mixture_target(RingMixtureParams::demo_second(12)).unwrap();
    let mut r = rng(500 + seed);
    let s1 = sample(&q1, &mut r, 1000).unwrap();
    let s2 = sample(&q2, &mut r, 1000).unwrap();
    let model = build_flow_with_mask(12, 4, &[64, 64], MaskPattern::Interleaved, &mut r).unwrap();
    let config =
        TrainConfig { beta1: beta, beta2: beta, eta_phi: 1e-2, max_epochs: 25, seed, ..TrainConfig::default() };
    let report = train(&config, &q1, &q2, &s1, &s2, &model).unwrap();
    (report.objective_trace, report.r_trace, report.stopped_by)
}

fn span(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min)
}

// Stable means: the stopping rule fired, or over epochs 20..=25 the objective moved by at most
// 5% of its total descent and log r̃ by at most 0.1.
#[test]
fn demo_traces_settle_within_25_epochs_for_most_seeds() {
    let mut stable = 0;
    for seed in 0..10 {
        let (obj, rt, stop) = demo_traces(seed, 0.05);
        assert!(obj.iter().chain(&rt).all(|v| v.is_finite()), "seed {seed}");
        let descent = obj[0] - obj.iter().cloned().fold(f64::INFINITY, f64::min);
        let settled = stop == StopReason::ObjectiveAndRStable
            || (span(&obj[20..]) <= 0.05 * descent && span(&rt[20..]) <= 0.1);
        stable += settled as usize;
    }
    assert!(stable >= 8, "{stable}/10 settled");
}

#[test]
fn likelihood_terms_smooth_the_demo_objective() {
    let rises = |obj: &[f64]| obj.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum::<f64>();
    let (mut hybrid, mut plain) = (0.0, 0.0);
    for seed in 0..4 {
        hybrid += rises(&demo_traces(seed, 0.05).0);
        plain += rises(&demo_traces(seed, 0.0).0);
    }
    assert!(hybrid < plain, "hybrid rises {hybrid} vs plain {plain}");
}

#[test]
fn held_out_bridge_recovers_from_a_distant_start() {
    let q1 = gaussian_target(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let q2 = gaussian_target(&[0.5, 0.0], &[2.0, 1.0]).unwrap();
    let mut r = rng(21);
    let e1 = sample(&q1, &mut r, 1000).unwrap();
    let e2 = sample(&q2, &mut r, 1000).unwrap();
    let model = FlowModel::zeros(2, 2, &[4], MaskPattern::Halves).unwrap();
    let near = estimate_with_flow(&model, &q1, &q2, &e1, &e2, -0.3).unwrap();
    let far = estimate_with_flow(&model, &q1, &q2, &e1, &e2, -1000.0).unwrap();
    assert!(near.converged && far.converged);
    assert!((near.log_r_hat - far.log_r_hat).abs() < 1e-7, "{} vs {}", near.log_r_hat, far.log_r_hat);
}
