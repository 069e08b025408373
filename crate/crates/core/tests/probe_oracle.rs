// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{random_problem, reference_optimum, Reference};
use proptest::prelude::*;
use veracity_core::probe::{fit_probe, predict_correct, sparsity, RegConfig, TrainingSet};

fn relative_gap(fitted: f64, reference: f64) -> f64 {
    (fitted - reference) / reference.abs()
}

#[test]
fn l2_problem_matches_gradient_descent_oracle() {
    let set = random_problem(11, 200, 10);
    let reg = RegConfig::l2(1.0);
    let model = fit_probe(&set, &reg).unwrap();
    assert!(model.converged);
    let reference = Reference::new(&set, 1.0, 0.0);
    let (optimum, norm) = reference_optimum(&reference);
    assert!(norm <= 1e-12, "oracle stopped at {norm}");
    let gap = relative_gap(model.train_loss, optimum);
    assert!(gap.abs() <= 1e-6, "relative gap {gap}");
    // The reported loss is the objective at the returned parameters.
    let own = reference.objective(&model.weights, model.bias);
    assert!((own - model.train_loss).abs() <= 1e-12);
}

#[test]
fn l1_problem_matches_coordinate_descent_oracle() {
    let set = random_problem(12, 200, 10);
    let reg = RegConfig {
        l2_strength: 0.01,
        l1_strength: 0.02,
        ..Default::default()
    };
    let model = fit_probe(&set, &reg).unwrap();
    let reference = Reference::new(&set, 0.01, 0.02);
    let (optimum, norm) = reference_optimum(&reference);
    assert!(norm <= 1e-12, "oracle stopped at {norm}");
    let gap = relative_gap(model.train_loss, optimum);
    assert!(gap.abs() <= 1e-6, "relative gap {gap}");
    assert!(reference.subgradient_norm(&model.weights, model.bias) <= 1e-6);
}

#[test]
fn oracles_agree_with_each_other() {
    let set = random_problem(13, 150, 6);
    let reference = Reference::new(&set, 0.1, 0.0);
    let (w, b, _) = reference.gradient_descent(1e-12, 2_000_000);
    let (w2, b2, _) = reference.coordinate_descent(1e-12, 200_000);
    for (a, c) in w.iter().zip(&w2) {
        assert!((a - c).abs() < 1e-9);
    }
    assert!((b - b2).abs() < 1e-9);
}

#[test]
fn noise_feature_beyond_kkt_bound_is_exactly_zero() {
    // Feature 0 is informative, feature 1 is pure noise.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut set = TrainingSet::new(2);
    for _ in 0..400 {
        let signal: f64 = rng.random_range(-2.0..2.0);
        let noise: f64 = rng.random_range(-1.0..1.0);
        let p = 1.0 / (1.0 + (-2.0 * signal).exp());
        set.push(&[signal, noise], rng.random::<f64>() < p).unwrap();
    }
    let l1 = 0.05;
    // Optimum with the noise weight pinned at zero: drop the column.
    let mut restricted = TrainingSet::new(1);
    for i in 0..set.len() {
        restricted.push(&[set.row(i)[0]], set.label(i)).unwrap();
    }
    let sub = Reference::new(&restricted, 0.0, l1);
    let (w, b, norm) = sub.coordinate_descent(1e-13, 100_000);
    assert!(norm <= 1e-12);
    let full = Reference::new(&set, 0.0, l1);
    let (g, _) = full.smooth_gradient(&[w[0], 0.0], b);
    let bound = g[1].abs();
    assert!(
        bound < l1,
        "test data must put the noise feature inside the KKT region ({bound})"
    );

    let model = fit_probe(&set, &RegConfig::l1(l1)).unwrap();
    assert!(model.converged);
    assert_eq!(model.weights[1], 0.0);
    assert!(model.weights[0] > 0.0);
}

#[test]
fn sparsity_is_monotone_over_the_default_sweep() {
    let base = random_problem(21, 300, 12);
    // Append eight noise columns.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
    let mut set = TrainingSet::new(20);
    for i in 0..base.len() {
        let mut row = base.row(i).to_vec();
        row.extend((0..8).map(|_| rng.random_range(-1.0..1.0)));
        set.push(&row, base.label(i)).unwrap();
    }
    let mut last = -1.0;
    for l1 in [0.0, 0.01, 0.03, 0.1] {
        let model = fit_probe(&set, &RegConfig::l1(l1)).unwrap();
        let s = sparsity(&model);
        assert!(s >= last, "sparsity dropped to {s} at l1 = {l1}");
        last = s;
    }
    assert!(last > 0.0);
}

#[test]
fn refits_are_bitwise_identical() {
    let set = random_problem(31, 500, 16);
    let reg = RegConfig {
        l2_strength: 1e-3,
        l1_strength: 0.01,
        ..Default::default()
    };
    let a = fit_probe(&set, &reg).unwrap();
    let b = fit_probe(&set, &reg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    for (x, y) in a.weights.iter().zip(&b.weights) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

fn rescaled(set: &TrainingSet, factors: &[f64]) -> TrainingSet {
    let mut out = TrainingSet::new(set.dim());
    for i in 0..set.len() {
        let row: Vec<f64> = set.row(i).iter().zip(factors).map(|(x, c)| x * c).collect();
        out.push(&row, set.label(i)).unwrap();
    }
    out
}

#[test]
fn power_of_two_rescaling_is_bitwise_invariant() {
    let set = random_problem(41, 200, 5);
    let reg = RegConfig::l2(0.01);
    let a = fit_probe(&set, &reg).unwrap();
    let b = fit_probe(&rescaled(&set, &[2.0, 0.25, 8.0, 1.0, 0.5]), &reg).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.bias, b.bias);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fitted_objective_is_near_the_oracle(
        seed in 0u64..10_000,
        n in 40usize..=500,
        d in 1usize..=20,
        l2 in prop::sample::select(vec![0.0, 1e-3, 0.1, 1.0]),
        l1 in prop::sample::select(vec![0.0, 0.005, 0.05]),
    ) {
        prop_assume!(l2 > 0.0 || l1 > 0.0);
        let set = random_problem(seed, n, d);
        let reg = RegConfig { l2_strength: l2, l1_strength: l1, ..Default::default() };
        let model = fit_probe(&set, &reg).unwrap();
        let reference = Reference::new(&set, l2, l1);
        let (optimum, _) = if l1 == 0.0 {
            let (w, b, norm) = reference.gradient_descent(1e-12, 2_000_000);
            (reference.objective(&w, b), norm)
        } else {
            let (w, b, norm) = reference.coordinate_descent(1e-12, 200_000);
            (reference.objective(&w, b), norm)
        };
        prop_assert!(model.train_loss <= optimum + 1e-6 * optimum.abs(),
            "fit {} vs oracle {}", model.train_loss, optimum);
    }

    #[test]
    fn rescaling_features_leaves_predictions_unchanged(
        seed in 0u64..10_000,
        factors in prop::collection::vec(0.1f64..10.0, 4),
    ) {
        let set = random_problem(seed, 120, 4);
        let reg = RegConfig::l2(0.05);
        let a = fit_probe(&set, &reg).unwrap();
        let scaled = rescaled(&set, &factors);
        let b = fit_probe(&scaled, &reg).unwrap();
        for i in 0..set.len() {
            let ha: Vec<f32> = set.row(i).iter().map(|&v| v as f32).collect();
            let hb: Vec<f32> = scaled.row(i).iter().map(|&v| v as f32).collect();
            let pa = predict_correct(&a, &ha).unwrap();
            let pb = predict_correct(&b, &hb).unwrap();
            prop_assert!((pa - pb).abs() < 1e-5, "{pa} vs {pb}");
        }
    }

    #[test]
    fn predictions_stay_strictly_inside_the_unit_interval(
        h in prop::collection::vec(-1e30f32..1e30f32, 3),
    ) {
        let set = random_problem(7, 100, 3);
        let model = fit_probe(&set, &RegConfig::default()).unwrap();
        let p = predict_correct(&model, &h).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
