use ehrelay::optimize::{optimize, sweep, OptimizeOptions, Problem, Solution, SweepAxis, SweepSpec, TimingSetup};
use ehrelay::rates::{product_policy, rate_thm1, rate_thm3, DEFAULT_EPS_POS};
use ehrelay::timing::{rate_thm2, NoiseOptions};
use ehrelay::{BatterySpec, BinaryChannel, JointPmf, Pmf, StatePolicy, Theorem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bsc(p: f64) -> BinaryChannel {
    BinaryChannel::symmetric(p).unwrap()
}

fn small() -> OptimizeOptions {
    OptimizeOptions {
        grid_points: 9,
        restarts: 3,
        ..Default::default()
    }
}

#[test]
fn best_policy_beats_random_policies() {
    let spec = BatterySpec::new(3, 2).unwrap();
    let ch2 = bsc(0.1);
    let problem = Problem::new(
        Theorem::NoisySecondHop,
        spec,
        BinaryChannel::noiseless(),
        ch2,
        None,
        None,
    )
    .unwrap();
    let best = optimize(&problem, &OptimizeOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut best_random = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let tables = (0..spec.num_states())
            .map(|u| {
                if spec.can_spend(u) {
                    let w: Vec<f64> = (0..4).map(|_| rng.random_range(1e-3..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    JointPmf::new(vec![vec![w[0] / s, w[1] / s], vec![w[2] / s, w[3] / s]]).unwrap()
                } else {
                    let d = rng.random_range(1e-3..1.0 - 1e-3);
                    JointPmf::new(vec![vec![1.0 - d, 0.0], vec![d, 0.0]]).unwrap()
                }
            })
            .collect();
        let r = rate_thm1(&spec, &StatePolicy::Joint(tables), &ch2, DEFAULT_EPS_POS).unwrap();
        best_random = best_random.max(r.rate);
    }
    assert!(
        best.breakdown.rate >= best_random,
        "optimum {} below a random policy {}",
        best.breakdown.rate,
        best_random
    );
}

#[test]
fn timing_optimum_matches_dense_line_search() {
    let spec = BatterySpec::new(3, 3).unwrap();
    let ch1 = bsc(0.05);
    let setup = TimingSetup::modular(5).unwrap();
    let problem = Problem::new(
        Theorem::Timing,
        spec,
        ch1,
        BinaryChannel::noiseless(),
        None,
        Some(&setup),
    )
    .unwrap();
    let best = optimize(&problem, &OptimizeOptions::default()).unwrap();
    let mut dense = f64::NEG_INFINITY;
    let steps = 20_000;
    for i in 1..steps {
        let p = i as f64 / steps as f64;
        let r = rate_thm2(
            &spec,
            &Pmf::bernoulli(p).unwrap(),
            &ch1,
            &setup.scheme,
            NoiseOptions::default(),
        )
        .unwrap();
        dense = dense.max(r.breakdown.rate);
    }
    assert!(
        (best.breakdown.rate - dense).abs() <= 1e-4,
        "optimizer {} vs dense scan {}",
        best.breakdown.rate,
        dense
    );
    assert!(matches!(best.solution, Solution::Timing { .. }));
}

#[test]
fn doubling_the_grid_never_hurts() {
    let spec = BatterySpec::new(3, 2).unwrap();
    let problem = Problem::new(Theorem::NoisyBothHops, spec, bsc(0.05), bsc(0.1), None, None).unwrap();
    let mut last = f64::NEG_INFINITY;
    for g in [3, 5, 9, 17] {
        let r = optimize(
            &problem,
            &OptimizeOptions {
                grid_points: g,
                ..small()
            },
        )
        .unwrap()
        .breakdown
        .rate;
        assert!(r >= last - 1e-15, "grid {g}: {r} < {last}");
        last = r;
    }
}

#[test]
fn single_point_sweep_equals_optimize() {
    let ch1 = bsc(0.05);
    let ch2 = bsc(0.1);
    let loss = [Pmf::point(2, 0), Pmf::new(vec![0.1, 0.9]).unwrap()];
    for theorem in [Theorem::NoisySecondHop, Theorem::NoisyBothHops, Theorem::RandomLoss] {
        let rows = sweep(&SweepSpec {
            theorem,
            axis: SweepAxis::Capacity { cost: 2 },
            values: vec![3],
            ch1,
            ch2,
            loss: Some(loss.clone()),
            timing: None,
            options: small(),
        })
        .unwrap();
        let spec = BatterySpec::new(3, 2).unwrap();
        let problem = Problem::new(theorem, spec, ch1, ch2, Some(&loss), None).unwrap();
        let direct = optimize(&problem, &small()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].optimum.params, direct.params);
        assert_eq!(rows[0].optimum.breakdown, direct.breakdown);
    }
}

#[test]
fn repeated_and_unsorted_sweep_values_collapse() {
    let rows = sweep(&SweepSpec {
        theorem: Theorem::NoisyBothHops,
        axis: SweepAxis::Cost,
        values: vec![3, 2, 3],
        ch1: bsc(0.05),
        ch2: bsc(0.1),
        loss: None,
        timing: None,
        options: small(),
    })
    .unwrap();
    let costs: Vec<usize> = rows.iter().map(|r| r.cost).collect();
    assert_eq!(costs, [2, 3]);
    assert!(rows.iter().all(|r| r.capacity == r.cost));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_is_continuous_in_the_policy(p1 in 0.01f64..0.99, send in 0.01f64..0.99, dp in -1e-7f64..1e-7, ds in -1e-7f64..1e-7) {
        let spec = BatterySpec::new(3, 2).unwrap();
        let a = rate_thm3(&spec, &product_policy(&spec, p1, send).unwrap(), &bsc(0.05), &bsc(0.1), DEFAULT_EPS_POS).unwrap();
        let b = rate_thm3(&spec, &product_policy(&spec, p1 + dp, send + ds).unwrap(), &bsc(0.05), &bsc(0.1), DEFAULT_EPS_POS).unwrap();
        prop_assert!((a.rate - b.rate).abs() < 1e-5);
        prop_assert!((a.relay_bound - b.relay_bound).abs() < 1e-5);
    }

    #[test]
    fn optimum_is_deterministic_and_feasible(seed in 0u64..4) {
        let spec = BatterySpec::new(2, 2).unwrap();
        let problem = Problem::new(Theorem::NoisyBothHops, spec, bsc(0.05), bsc(0.1), None, None).unwrap();
        let opts = OptimizeOptions { seed, ..small() };
        let a = optimize(&problem, &opts).unwrap();
        let b = optimize(&problem, &opts).unwrap();
        prop_assert_eq!(a.digest(), b.digest());
        prop_assert!(a.params.iter().all(|p| (0.0..=1.0).contains(p)));
        let uniform = rate_thm3(&spec, &product_policy(&spec, 0.5, 0.5).unwrap(), &bsc(0.05), &bsc(0.1), DEFAULT_EPS_POS).unwrap();
        prop_assert!(a.breakdown.rate >= uniform.rate);
    }
}
