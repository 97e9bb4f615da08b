use fgb_core::densities::{gaussian_target, ring_mixture_target, sample, RingMixtureParams};
use fgb_core::fgb::{maximize_log_r, HybridObjective};
use fgb_core::flow::{build_flow_with_mask, FlowModel, MaskPattern};
use fgb_core::grad::{finite_difference_check, objective_with_gradients, Objective};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn perturbed(model: &FlowModel, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    model
        .theta()
        .iter()
        .map(|t| {
            let z: f64 = StandardNormal.sample(rng);
            t + scale * z
        })
        .collect()
}

#[test]
fn hybrid_objective_matches_central_differences_on_rings() {
    let q1 = ring_mixture_target(RingMixtureParams::benchmark_first(4)).unwrap();
    let q2 = ring_mixture_target(RingMixtureParams::benchmark_second(4)).unwrap();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s1 = sample(&q1, &mut rng, 256).unwrap();
        let s2 = sample(&q2, &mut rng, 256).unwrap();
        for pattern in [MaskPattern::Halves, MaskPattern::Interleaved] {
            let model = build_flow_with_mask(4, 2, &[8, 8], pattern, &mut rng).unwrap();
            let theta = perturbed(&model, &mut rng, 0.1);
            let obj = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.05, 0.05, 0.5).unwrap();
            let log_r = maximize_log_r(&obj, &theta).unwrap().maximizer_log_r + 0.3;
            // truncation error is O(h²) and already ~3e-4 at h = 1e-4 for some seeds
            let rep = finite_difference_check(&obj, &theta, log_r, 1e-5).unwrap();
            assert!(rep.max_rel_error < 1e-4, "seed {seed} {pattern:?}: {} at {}", rep.max_rel_error, rep.worst_index);
        }
    }
}

#[test]
fn identity_flow_gradient_matches_differences() {
    let q1 = gaussian_target(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let q2 = gaussian_target(&[0.5, 0.0], &[2.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s1 = sample(&q1, &mut rng, 200).unwrap();
    let s2 = sample(&q2, &mut rng, 200).unwrap();
    let model = build_flow_with_mask(2, 2, &[4], MaskPattern::Halves, &mut rng).unwrap();
    let obj = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.05, 0.05, 0.5).unwrap();
    let rep = finite_difference_check(&obj, model.theta(), -0.2, 1e-5).unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn raw_harmonic_log_r_gradient_matches_differences() {
    let q1 = gaussian_target(&[0.0], &[1.0]).unwrap();
    let q1 = fgb_core::densities::augment_with_standard_normal(q1, 1).unwrap();
    let q2 = gaussian_target(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s1 = sample(&q1, &mut rng, 300).unwrap();
    let s2 = sample(&q2, &mut rng, 300).unwrap();
    let model = FlowModel::zeros(2, 1, &[4], MaskPattern::Halves).unwrap();
    let obj = HybridObjective::new(&model, &q1, &q2, &s1, &s2, 0.0, 0.0, 0.5).unwrap().raw();
    let rec = objective_with_gradients(&obj, model.theta(), 0.1).unwrap();
    let h = 1e-5;
    let fd = (obj.value(model.theta(), 0.1 + h).unwrap() - obj.value(model.theta(), 0.1 - h).unwrap()) / (2.0 * h);
    assert!((rec.d_log_r - fd).abs() <= 1e-6 * fd.abs().max(1e-8), "{} vs {fd}", rec.d_log_r);
}
