mod common;

use common::{dense_marginals, gauss_newton, random_fixture, value_gap};
use langslam::factor_graph::{
    marginals, optimize, FactorGraph, GaussianFactor, GaussianNoise, SolverConfig, Values, VariableId,
};
use langslam::se2::{Point2, Pose2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn tight() -> SolverConfig {
    SolverConfig {
        absolute_tolerance: 1e-14,
        relative_tolerance: 1e-14,
        ..Default::default()
    }
}

fn max_marginal_gap(graph: &FactorGraph, values: &Values) -> f64 {
    let lib = marginals(graph, values).unwrap();
    dense_marginals(graph, values)
        .iter()
        .map(|(k, m)| (lib.get(k).unwrap() - m).amax())
        .fold(0.0, f64::max)
}

#[test]
fn three_variable_marginals_match_dense_inverse() {
    let (x0, x1, l0) = (VariableId::robot_pose(0), VariableId::robot_pose(1), VariableId::landmark(0));
    let mut g = FactorGraph::new();
    for k in [x0, x1, l0] {
        g.add_variable(k).unwrap();
    }
    g.add_factor(GaussianFactor::prior_pose(x0, Pose2::identity(), GaussianNoise::from_sigmas(&[0.1, 0.1, 0.05]).unwrap()).unwrap())
        .unwrap();
    g.add_factor(
        GaussianFactor::between_pose(x0, x1, Pose2::new(1.0, 0.2, 0.4), GaussianNoise::from_sigmas(&[0.2, 0.1, 0.1]).unwrap())
            .unwrap(),
    )
    .unwrap();
    g.add_factor(GaussianFactor::pose_to_point(x0, l0, Point2::new(2.0, 1.0), GaussianNoise::isotropic(2, 0.3).unwrap()).unwrap())
        .unwrap();
    g.add_factor(GaussianFactor::pose_to_point(x1, l0, Point2::new(0.8, 0.6), GaussianNoise::isotropic(2, 0.3).unwrap()).unwrap())
        .unwrap();
    let mut init = Values::new();
    init.insert_pose(x0, Pose2::identity()).unwrap();
    init.insert_pose(x1, Pose2::new(1.0, 0.2, 0.4)).unwrap();
    init.insert_point(l0, Point2::new(2.0, 1.0)).unwrap();
    let (v, _) = optimize(&g, &init, &tight()).unwrap();
    assert!(max_marginal_gap(&g, &v) < 1e-7);
}

#[test]
fn random_fixture_marginals_match_dense_inverse() {
    for seed in 100..110 {
        let fx = random_fixture(seed, 20, 5);
        let (v, _) = optimize(&fx.graph, &fx.init, &tight()).unwrap();
        let gap = max_marginal_gap(&fx.graph, &v);
        assert!(gap < 1e-6, "seed {seed}: {gap:e}");
    }
}

/// Chains of at most 30 poses with σ_trans 0.05 m and σ_rot 0.01 rad.
#[test]
fn pose_chains_recover_ground_truth_and_match_gauss_newton() {
    let (st, sr) = (0.05, 0.01);
    let noise = Normal::new(0.0, 1.0).unwrap();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5 + (seed as usize % 26);
        let truth: Vec<Pose2> = (0..n)
            .scan(Pose2::identity(), |p, i| {
                let out = *p;
                *p = p.compose(&Pose2::new(0.5, 0.0, if i % 3 == 0 { 0.3 } else { -0.1 }));
                Some(out)
            })
            .collect();
        let mut g = FactorGraph::new();
        let mut init = Values::new();
        let x = |i: usize| VariableId::robot_pose(i as u32);
        g.add_variable(x(0)).unwrap();
        g.add_factor(GaussianFactor::prior_pose(x(0), truth[0], GaussianNoise::isotropic(3, 1e-3).unwrap()).unwrap())
            .unwrap();
        init.insert_pose(x(0), truth[0]).unwrap();
        let odo = GaussianNoise::from_sigmas(&[st, st, sr]).unwrap();
        for i in 1..n {
            let z = truth[i - 1].between(&truth[i]);
            let z = Pose2::new(
                z.x() + st * noise.sample(&mut rng),
                z.y() + st * noise.sample(&mut rng),
                z.theta() + sr * noise.sample(&mut rng),
            );
            g.add_variable(x(i)).unwrap();
            g.add_factor(GaussianFactor::between_pose(x(i - 1), x(i), z, odo.clone()).unwrap()).unwrap();
            let guess = init.pose(&x(i - 1)).unwrap().compose(&z);
            init.insert_pose(x(i), Pose2::new(guess.x() + 0.1, guess.y() - 0.1, guess.theta() + 0.05)).unwrap();
        }
        let (v, report) = optimize(&g, &init, &tight()).unwrap();
        assert!(report.final_cost <= report.initial_cost);
        let rmse = ((0..n)
            .map(|i| v.pose(&x(i)).unwrap().translation().distance_squared(&truth[i].translation()))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        // translation noise plus lever-arm heading noise, accumulated over the chain
        let budget = 3.0 * ((n as f64) * (st * st + (sr * 0.5 * n as f64).powi(2))).sqrt();
        assert!(rmse < budget, "seed {seed}: rmse {rmse} budget {budget}");
        let gn = gauss_newton(&g, &init);
        for (k, val) in v.iter() {
            assert!(value_gap(val, gn.get(k).unwrap()) < 1e-6, "seed {seed} {k}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lm_never_raises_the_cost(seed in 0u64..10_000) {
        let fx = random_fixture(seed, 15, 3);
        let (v, report) = optimize(&fx.graph, &fx.init, &SolverConfig::default()).unwrap();
        prop_assert!(report.final_cost <= report.initial_cost);
        prop_assert!((fx.graph.error(&v).unwrap() - report.final_cost).abs() <= 1e-9 * report.final_cost.max(1.0));
        prop_assert!(fx.graph.error(&v).unwrap() <= fx.graph.error(&fx.truth).unwrap() + 1e-9);
    }

    #[test]
    fn adding_a_factor_never_raises_a_trace_at_a_fixed_point(seed in 0u64..10_000, pose in 0u32..5, sigma in 0.05f64..2.0) {
        let fx = random_fixture(seed, 10, 3);
        let (v, _) = optimize(&fx.graph, &fx.init, &SolverConfig::default()).unwrap();
        let before = marginals(&fx.graph, &v).unwrap();
        let mut g = fx.graph.clone();
        let l = VariableId::landmark(seed as u32 % 3);
        let x = VariableId::robot_pose(pose);
        let z = v.pose(&x).unwrap().transform_to(&v.point(&l).unwrap());
        g.add_factor(GaussianFactor::pose_to_point(x, l, z, GaussianNoise::isotropic(2, sigma).unwrap()).unwrap()).unwrap();
        let after = marginals(&g, &v).unwrap();
        for (k, m) in before.iter() {
            prop_assert!(after.get(k).unwrap().trace() <= m.trace() + 1e-9, "{}", k);
        }
    }
}
