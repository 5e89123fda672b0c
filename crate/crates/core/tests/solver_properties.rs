//! Structural properties of the AMD iteration and of multiplier sweeps.

mod common;

use common::*;
use ndarray::Array2;
use rdd::distortion::column_marginal;
use rdd::solver::{rate_objective, solve_problem};
use rdd::{
    amd_step, ba_solve, build_uniform_grid, cross_distance_matrix, mutual_information, solve,
    source_pmf, trace_curve, AmdProblem, Coupling, SolverConfig, SourceFamily, SweepPlan,
};

fn gaussian_1d(k: usize) -> (rdd::DiscreteSource, rdd::MetricSpace) {
    let x = build_uniform_grid(8.0, k, 1, 2.0).unwrap();
    let src = source_pmf(&x, SourceFamily::Gaussian { sigma: 2.0 }).unwrap();
    (src, x)
}

#[test]
fn marginal_is_assigned_after_every_step() {
    let mut rng = rng(31);
    for case in 0..50 {
        let (m, n) = (2 + case % 7, 2 + (case * 3) % 7);
        let src = random_source(&mut rng, m, 1 + case % 3);
        let y = random_space(&mut rng, n, 1 + (case + 1) % 3);
        let problem = AmdProblem::from_spaces(&src, &y, None).unwrap();
        let cfg = SolverConfig::default().with_lambda(0.01 + 0.05 * (case % 5) as f64);
        let mut state = Coupling::uniform(m, n);
        for _ in 0..20 {
            state = amd_step(&problem, &state, &cfg).unwrap();
            let recomputed = column_marginal(state.w().view(), src.pmf().view());
            assert!(state
                .r()
                .iter()
                .zip(recomputed.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
            let stored =
                rate_objective(state.w().view(), state.r().view(), src.pmf().view()).unwrap();
            let fresh = mutual_information(&state, src.pmf()).unwrap();
            assert!((stored.max(0.0) - fresh).abs() <= 1e-14);
            for row in state.w().rows() {
                assert!((row.sum() - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn zero_multiplier_reaches_product_coupling_in_two_steps() {
    let mut rng = rng(32);
    let src = random_source(&mut rng, 6, 2);
    let y = random_space(&mut rng, 5, 3);
    let problem = AmdProblem::from_spaces(&src, &y, None).unwrap();
    let cfg = SolverConfig::default().with_lambda(0.0);
    let mut state =
        Coupling::from_conditional(random_conditional(&mut rng, 6, 5), src.pmf().view()).unwrap();
    for _ in 0..2 {
        state = amd_step(&problem, &state, &cfg).unwrap();
    }
    for row in state.w().rows() {
        for (w, r) in row.iter().zip(state.r().iter()) {
            assert!((w - r).abs() <= 1e-15);
        }
    }
    assert!(mutual_information(&state, src.pmf()).unwrap() <= 1e-9);
}

#[test]
fn pure_gromov_step_ignores_cross_distances() {
    let mut rng = rng(33);
    let src = random_source(&mut rng, 5, 2);
    let y = random_space(&mut rng, 4, 2);
    let d = cross_distance_matrix(src.space(), &y).unwrap();
    let with = AmdProblem::from_spaces(&src, &y, Some(d)).unwrap();
    let without = AmdProblem::from_spaces(&src, &y, None).unwrap();
    let cfg = SolverConfig::default().with_lambda(0.3);
    let state =
        Coupling::from_conditional(random_conditional(&mut rng, 5, 4), src.pmf().view()).unwrap();
    let a = amd_step(&with, &state, &cfg).unwrap();
    let b = amd_step(&without, &state, &cfg).unwrap();
    assert!(a
        .w()
        .iter()
        .zip(b.w().iter())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn solve_is_repeated_stepping_from_uniform() {
    let (src, y) = gaussian_1d(12);
    let cfg = SolverConfig {
        lambda: 0.03,
        max_iter: 25,
        ..SolverConfig::default()
    };
    let res = solve(&src, &y, &cfg, None).unwrap();
    let problem = AmdProblem::from_spaces(&src, &y, None).unwrap();
    let mut state = Coupling::uniform(12, 12);
    for _ in 0..25 {
        state = amd_step(&problem, &state, &cfg).unwrap();
    }
    assert_eq!(res.iterations_run, 25);
    assert!(res
        .coupling
        .w()
        .iter()
        .zip(state.w().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(close(
        res.gromov_distortion,
        problem.gromov(state.w().view()),
        1e-15
    ));
    assert_eq!(res.fused_distortion, res.gromov_distortion);
}

#[test]
fn theta_zero_solve_agrees_with_blahut_arimoto() {
    let (src, y) = gaussian_1d(50);
    let d = cross_distance_matrix(src.space(), &y).unwrap();
    for lambda in [0.0, 0.1, 0.5, 1.0, 2.0] {
        let cfg = SolverConfig {
            lambda,
            theta: 0.0,
            ..SolverConfig::default()
        };
        let amd = solve(&src, &y, &cfg, Some(&d)).unwrap();
        let ba = ba_solve(&src, &y, &d, lambda, cfg.max_iter).unwrap();
        assert!((amd.rate_nats - ba.rate_nats).abs() <= 1e-8);
        assert!(close(
            amd.classical_distortion,
            ba.classical_distortion,
            1e-8
        ));
        assert_eq!(amd.fused_distortion, amd.classical_distortion);
    }
}

#[test]
fn fused_step_needs_cross_distances() {
    let (src, y) = gaussian_1d(6);
    let cfg = SolverConfig {
        theta: 0.5,
        ..SolverConfig::default()
    };
    assert!(matches!(
        solve(&src, &y, &cfg, None),
        Err(rdd::Error::MissingCrossDistance { .. })
    ));
}

#[test]
fn rescaling_metrics_rescales_the_multiplier() {
    let mut rng = rng(34);
    let src = random_source(&mut rng, 6, 1);
    let y = random_space(&mut rng, 5, 2);
    let c: f64 = 3.0;
    let base = AmdProblem::from_spaces(&src, &y, None).unwrap();
    let scaled = AmdProblem::new(
        src.space().dist_q() * c,
        y.dist_q() * c,
        src.pmf().clone(),
        None,
    )
    .unwrap();
    let lambda = 0.02;
    let a = solve_problem(&base, &SolverConfig::default().with_lambda(lambda)).unwrap();
    let b = solve_problem(
        &scaled,
        &SolverConfig::default().with_lambda(lambda / (c * c)),
    )
    .unwrap();
    for (x, y) in a.coupling.w().iter().zip(b.coupling.w().iter()) {
        assert!((x - y).abs() <= 1e-9);
    }
    assert!(close(
        b.gromov_distortion,
        c * c * a.gromov_distortion,
        1e-9
    ));
    assert!((a.rate_nats - b.rate_nats).abs() <= 1e-9);
}

#[test]
fn increasing_multiplier_trades_distortion_for_rate() {
    let (src, y) = gaussian_1d(50);
    let plan = SweepPlan::new(0.0, 0.05, 40, vec![1.0]).with_jobs(1);
    let out = trace_curve(&src, &y, &plan, None).unwrap();
    for pair in out.points.windows(2) {
        assert!(pair[1].distortion <= pair[0].distortion + 1e-6, "{pair:?}");
        assert!(pair[1].rate_nats >= pair[0].rate_nats - 1e-6, "{pair:?}");
    }
}

#[test]
fn sweeps_are_reproducible_bit_for_bit() {
    let (src, y) = gaussian_1d(20);
    let d: Array2<f64> = cross_distance_matrix(src.space(), &y).unwrap();
    let plan = SweepPlan::new(0.0, 0.1, 12, vec![0.5]);
    let serial = trace_curve(&src, &y, &plan.clone().with_jobs(1), Some(&d)).unwrap();
    let again = trace_curve(&src, &y, &plan.clone().with_jobs(1), Some(&d)).unwrap();
    let pooled = trace_curve(&src, &y, &plan.with_jobs(3), Some(&d)).unwrap();
    for other in [&again, &pooled] {
        for (a, b) in serial.points.iter().zip(&other.points) {
            assert_eq!(a.distortion.to_bits(), b.distortion.to_bits());
            assert_eq!(a.rate_nats.to_bits(), b.rate_nats.to_bits());
        }
    }
}
