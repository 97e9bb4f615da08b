//! Fast invariant suite behind `fgb check`.

use std::path::Path;

use fgb_core::bridge::{
    general_f_bridge_from, geometric_bridge_from, importance_sampling_from, optimal_bridge_from, IsDirection,
    IterationOptions,
};
use fgb_core::densities::{ring_mixture_target, sample, RingMixtureParams};
use fgb_core::divergences::{make_generator, GeneratorKind};
use fgb_core::fgb::{train, HybridObjective, TrainConfig};
use fgb_core::flow::{build_flow_with_mask, FlowModel, MaskPattern};
use fgb_core::grad::finite_difference_check;
use fgb_core::LogRatios;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::AppResult;
use crate::model_io::{load_model, model_from_str, model_to_string};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, r: AppResult<String>) -> CheckOutcome {
    match r {
        Ok(detail) => CheckOutcome { name, passed: true, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
    }
}

fn fail(msg: String) -> crate::error::AppError {
    crate::error::AppError::Config(msg)
}

fn random_flow(dim: usize, seed: u64) -> AppResult<FlowModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = build_flow_with_mask(dim, 4, &[8, 8], MaskPattern::Interleaved, &mut rng)?;
    let theta: Vec<f64> = m.theta().iter().map(|t| t + 0.2 * (rng.random::<f64>() - 0.5)).collect();
    Ok(m.with_theta(&theta)?)
}

fn generator_identities() -> AppResult<String> {
    let kinds = [
        GeneratorKind::Harmonic(0.3),
        GeneratorKind::Kl,
        GeneratorKind::ReverseKl,
        GeneratorKind::Js(0.6),
        GeneratorKind::SqHellinger,
    ];
    let mut worst: f64 = 0.0;
    for kind in kinds {
        let g = make_generator(kind)?;
        if g.f(1.0).abs() > 1e-14 {
            return Err(fail(format!("{kind:?}: f(1) = {}", g.f(1.0))));
        }
        for k in -40..=40 {
            let u = (k as f64 * 0.2).exp();
            let conj = u * g.f_prime(u) - g.f(u);
            worst = worst.max((g.conjugate_of_fprime(u) - conj).abs() / conj.abs().max(1.0));
            if !(g.f_double_prime(u) > 0.0) {
                return Err(fail(format!("{kind:?}: f'' not positive at {u}")));
            }
        }
    }
    if worst > 1e-10 {
        return Err(fail(format!("conjugate identity off by {worst:.3e}")));
    }
    Ok(format!("5 generators, max conjugate error {worst:.1e}"))
}

fn estimator_identities() -> AppResult<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
    let b: Vec<f64> = (0..150).map(|_| rng.random_range(-2.5..1.5)).collect();
    let r = LogRatios::new(a, b)?;
    let opts = IterationOptions::default();
    let hel = general_f_bridge_from(&make_generator(GeneratorKind::SqHellinger)?, &r, opts)?.log_r_hat;
    let kl = general_f_bridge_from(&make_generator(GeneratorKind::Kl)?, &r, opts)?.log_r_hat;
    let s1 = 200.0 / 350.0;
    let js = general_f_bridge_from(&make_generator(GeneratorKind::Js(s1))?, &r, opts)?.log_r_hat;
    let d = [
        (hel - geometric_bridge_from(&r).log_r_hat).abs(),
        (kl - importance_sampling_from(IsDirection::Q2Proposal, r.at2())?.log_r_hat).abs(),
        (js - optimal_bridge_from(&r, opts)?.log_r_hat).abs(),
    ];
    if d[0] > 1e-10 || d[1] > 1e-10 || d[2] > 1e-8 {
        return Err(fail(format!("hellinger/kl/js gaps {:.2e} {:.2e} {:.2e}", d[0], d[1], d[2])));
    }
    Ok("sq_hellinger = geometric, kl = importance sampling, js(s1) = optimal".into())
}

fn flow_round_trip() -> AppResult<String> {
    let mut worst: f64 = 0.0;
    for dim in 2..7 {
        let model = random_flow(dim, dim as u64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(100 + dim as u64);
        let x: Vec<f64> = (0..100 * dim).map(|_| rng.random_range(-4.0..4.0)).collect();
        let (y, ld) = model.forward_batch(&x)?;
        let (back, ldi) = model.inverse_batch(&y)?;
        for (a, b) in x.iter().zip(&back) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in ld.iter().zip(&ldi) {
            worst = worst.max((a + b).abs());
        }
    }
    if worst > 1e-8 {
        return Err(fail(format!("round trip error {worst:.3e}")));
    }
    Ok(format!("dims 2-6, max error {worst:.1e}"))
}

fn gradient_spot_check() -> AppResult<String> {
    let q1 = ring_mixture_target(RingMixtureParams::benchmark_first(4))?;
    let q2 = ring_mixture_target(RingMixtureParams::benchmark_second(4))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s1 = sample(&q1, &mut rng, 40)?;
    let s2 = sample(&q2, &mut rng, 40)?;
    let model = random_flow(4, 9)?;
    let obj = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.05, 0.05, 0.5)?;
    let rep = finite_difference_check(&obj, model.theta(), 1.0, 1e-5)?;
    if rep.max_rel_error > 1e-4 {
        return Err(fail(format!("relative error {:.3e} at coordinate {}", rep.max_rel_error, rep.worst_index)));
    }
    Ok(format!("{} coordinates, max relative error {:.1e}", rep.analytic.len(), rep.max_rel_error))
}

fn model_file(path: Option<&Path>) -> AppResult<String> {
    let model = random_flow(5, 3)?;
    let back = model_from_str(&model_to_string(&model))?;
    if back != model {
        return Err(fail("save/load round trip changed the model".into()));
    }
    match path {
        Some(p) => {
            let m = load_model(p)?;
            Ok(format!("round trip exact; {} loads ({} parameters)", p.display(), m.param_count()))
        }
        None => Ok("round trip exact".into()),
    }
}

fn seeded_determinism() -> AppResult<String> {
    let q1 = ring_mixture_target(RingMixtureParams::benchmark_first(2))?;
    let q2 = ring_mixture_target(RingMixtureParams::benchmark_second(2))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s1 = sample(&q1, &mut rng, 60)?;
    let s2 = sample(&q2, &mut rng, 60)?;
    let model = build_flow_with_mask(2, 2, &[4], MaskPattern::Halves, &mut rng)?;
    let config = TrainConfig { max_epochs: 5, minibatch: Some(20), seed: 3, ..TrainConfig::default() };
    let a = train(&config, &q1, &q2, &s1, &s2, &model)?;
    let b = train(&config, &q1, &q2, &s1, &s2, &model)?;
    if a != b {
        return Err(fail("two seeded training runs differ".into()));
    }
    Ok(format!("{} epochs reproduced exactly", a.epochs_run))
}

/// Runs every group; `model` optionally names a saved flow to validate.
pub fn run_checks(model: Option<&Path>) -> Vec<CheckOutcome> {
    vec![
        outcome("generator-identities", generator_identities()),
        outcome("estimator-identities", estimator_identities()),
        outcome("flow-round-trip", flow_round_trip()),
        outcome("gradient-fd", gradient_spot_check()),
        outcome("model-file", model_file(model)),
        outcome("seeded-determinism", seeded_determinism()),
    ]
}
