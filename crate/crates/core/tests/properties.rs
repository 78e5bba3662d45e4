mod common;

use common::*;
use presched::datagen::solve_beta_params;
use presched::*;
use presched_solver::{solve_milp, MilpOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_dispatch_matches_lp(seed in any::<u64>(), level in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = random_system(&mut rng, 10, 4);
        let demand = level * system.total_capacity();
        let greedy = forward_dispatch(&system, demand).unwrap();
        let lp = forward_dispatch_lp(&system, demand).unwrap();
        let scale = 1.0 + greedy.forward_cost.abs();
        prop_assert!((greedy.forward_cost - lp.forward_cost).abs() <= 1e-9 * scale);
        for (a, b) in greedy.schedule.iter().zip(&lp.schedule) {
            prop_assert!((a - b).abs() <= 1e-7 * (1.0 + demand));
        }
        let total: f64 = greedy.schedule.iter().sum();
        prop_assert!((total - demand).abs() <= 1e-9 * (1.0 + demand));
    }

    #[test]
    fn balancing_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = random_system(&mut rng, 6, 4);
        let sample = &random_samples(&mut rng, &system, 1)[0];
        let prescribed = rng.random_range(0.0..=1.0) * system.total_capacity();
        let (fwd, bal) = two_stage_cost(&system, prescribed, &sample.nodal_loads).unwrap();
        for (u, d) in bal.up.iter().zip(&bal.down) {
            prop_assert!(u.min(*d) <= 1e-9);
        }
        prop_assert!(conservation_error(&system, &fwd.schedule, &bal, &sample.nodal_loads) <= 1e-6);
        let floor = system_optimum(&system, &sample.nodal_loads, PENALTY).unwrap();
        prop_assert!(bal.total_cost >= floor - 1e-7 * (1.0 + floor.abs()));
        prop_assert!((bal.total_cost - fwd.forward_cost - bal.balancing_cost).abs() <= 1e-7 * (1.0 + bal.total_cost.abs()));
    }

    #[test]
    fn beta_parameters_round_trip(mean in 0.01f64..0.99, frac in 0.01f64..0.99) {
        let sigma = frac * (mean * (1.0 - mean)).sqrt();
        let p = solve_beta_params(mean, sigma).unwrap();
        let (m, v) = beta_moments(p.alpha, p.beta);
        prop_assert!((m - mean).abs() <= 1e-10);
        prop_assert!((v.sqrt() - sigma).abs() <= 1e-10);
    }

    #[test]
    fn prescriptions_stay_in_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = random_system(&mut rng, 4, 2);
        let samples = random_samples(&mut rng, &system, 6);
        let model = train_partitioned(&system, &samples, 2, 100.0, &TrainConfig::default()).unwrap();
        for s in &samples {
            let p = model.prescribe(&s.features).unwrap();
            prop_assert!((0.0..=system.total_capacity()).contains(&p));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn estimation_milp_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = random_system(&mut rng, 3, 2);
        let n = rng.random_range(1..=5);
        let samples = random_samples(&mut rng, &system, n);
        let est = build_estimation_milp(&system, &samples).unwrap();
        let sol = solve_milp(&est.milp, &MilpOptions { gap_tol: 1e-9, ..Default::default() }).unwrap();
        let oracle = staircase_enumeration(&system, &samples);
        prop_assert!((sol.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()),
            "milp {} oracle {}", sol.objective, oracle);
    }

    #[test]
    fn trained_rule_is_never_worse_than_its_reported_objective(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let system = random_system(&mut rng, 3, 2);
        let samples = random_samples(&mut rng, &system, 6);
        let rule = train_affine(&system, &samples, &TrainConfig::default()).unwrap();
        let cap = system.total_capacity();
        let realised: f64 = samples
            .iter()
            .map(|s| two_stage_cost(&system, rule.apply(&s.features).clamp(0.0, cap), &s.nodal_loads).unwrap().1.total_cost)
            .sum::<f64>() / samples.len() as f64;
        prop_assert!((realised - rule.objective).abs() <= 1e-6 * (1.0 + realised.abs()),
            "realised {} reported {}", realised, rule.objective);
        prop_assert!(rule.best_bound <= rule.objective + 1e-9 * (1.0 + rule.objective.abs()));
    }
}

#[test]
fn model_json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let system = random_system(&mut rng, 4, 3);
    let samples = random_samples(&mut rng, &system, 10);
    let model = train_partitioned(&system, &samples, 2, 50.0, &TrainConfig::default()).unwrap();
    let back = PrescriptionModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(model, back);
}

#[test]
fn window_starts_are_even_and_disjoint() {
    let protocol = Protocol::default();
    let starts = protocol.window_starts(1500).unwrap();
    assert_eq!(starts.len(), 10);
    assert_eq!(starts[0], 0);
    assert_eq!(*starts.last().unwrap(), 1350);
    assert!(starts
        .windows(2)
        .all(|w| w[1] - w[0] >= protocol.window_length));
}
