mod common;

use maptrix::qp::{solve, solve_default, QpProblem, QpStatus, DEFAULT_TOL};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[test]
fn matches_dual_reference_on_fixed_suite() {
    let mut constrained = 0;
    for seed in 0..50u64 {
        let n = 2 + (seed as usize % 19);
        let m = 1 + (seed as usize * 7 % 30);
        let (p, _) = common::random_qp(seed, n, m);
        let s = solve_default(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "seed {seed}");
        let reference = common::dual_reference(&p, 20_000);
        assert!(
            (s.objective - reference).abs() <= 1e-5 * (1.0 + reference.abs()),
            "seed {seed}: solver {} vs reference {reference}",
            s.objective
        );
        assert!(p.is_feasible(&s.x, DEFAULT_TOL), "seed {seed}");
        assert!(s.kkt_residual <= DEFAULT_TOL * (1.0 + p.c.amax()), "seed {seed}: {}", s.kkt_residual);
        constrained += usize::from(!s.active.is_empty());
    }
    // The suite is only meaningful if most optima sit on constraints.
    assert!(constrained >= 35, "only {constrained} constrained optima");
}

#[test]
fn deterministic() {
    let (p, _) = common::random_qp(7, 12, 20);
    assert_eq!(solve_default(&p).unwrap(), solve_default(&p).unwrap());
}

#[test]
fn semidefinite_box_problem_beats_samples() {
    // Rank-one Hessian on a box: the optimum is partly pinned by bounds.
    let n = 6;
    let v = DVector::from_fn(n, |i, _| (i as f64 + 1.0) / n as f64);
    let q = &v * v.transpose();
    let c = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 });
    let mut a = DMatrix::zeros(2 * n, n);
    let mut b = DVector::zeros(2 * n);
    for i in 0..n {
        a[(2 * i, i)] = 1.0;
        a[(2 * i + 1, i)] = -1.0;
        b[2 * i] = 1.0;
        b[2 * i + 1] = 1.0;
    }
    let p = QpProblem::new(q, c, a, b);
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, QpStatus::Optimal);
    for x in common::feasible_samples(&p, &DVector::zeros(n), 1000, 3) {
        assert!(s.objective <= p.objective(&x) + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimum_beats_feasible_samples(seed in 0u64..10_000, n in 1usize..=20, m in 0usize..=30) {
        let (p, xf) = common::random_qp(seed, n, m);
        let s = solve_default(&p).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        for x in common::feasible_samples(&p, &xf, 200, seed) {
            prop_assert!(s.objective <= p.objective(&x) + 1e-9);
        }
    }

    #[test]
    fn scaling_whole_problem_keeps_argmin(seed in 0u64..10_000, scale in 0.01f64..100.0) {
        let (p, _) = common::random_qp(seed, 8, 12);
        let scaled = QpProblem::new(&p.q * scale, &p.c * scale, &p.a * scale, &p.b * scale);
        let a = solve_default(&p).unwrap();
        let b = solve_default(&scaled).unwrap();
        prop_assert!((a.x - b.x).amax() <= 1e-6);
    }

    #[test]
    fn infeasible_start_reaches_same_optimum(seed in 0u64..10_000) {
        let (p, _) = common::random_qp(seed, 6, 10);
        let far = p.clone().with_start(DVector::from_element(6, 50.0));
        let a = solve(&p, DEFAULT_TOL, 1000).unwrap();
        let b = solve(&far, DEFAULT_TOL, 1000).unwrap();
        prop_assert_eq!(b.status, QpStatus::Optimal);
        prop_assert!((a.objective - b.objective).abs() <= 1e-7 * (1.0 + a.objective.abs()));
    }
}
