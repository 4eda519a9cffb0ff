mod common;

use rand::Rng;
use common::feasibility_error;
use treeshrink::reduce::{init_plan, optimal_plan, probability_step, quantizer_step};
use treeshrink::{nested_distance, random_init, reduce_tree, Error, ReductionConfig, SolverKind};

#[test]
fn probability_steps_keep_plans_feasible() {
    let mut rng = common::rng(20);
    for (solver, tolerance) in [(SolverKind::Lp, 1e-9), (SolverKind::Mam, 1e-6), (SolverKind::Ibp, 1e-6)] {
        for _ in 0..8 {
            let depth = rng.gen_range(1..=3);
            let original = common::random_tree(&mut rng, depth, 4, 1);
            let reduced = common::random_tree(&mut rng, depth, 2, 1);
            let config = ReductionConfig { solver, ..Default::default() };
            let mut plan = init_plan(&original, &reduced).unwrap();
            let mut current = reduced.clone();
            for k in 1..=3 {
                current = quantizer_step(&original, &current, &plan).unwrap();
                plan = probability_step(&original, &current, &plan, &config, k).unwrap().plan;
                let err = feasibility_error(&original, &current, &plan);
                assert!(err <= tolerance, "{solver}: error {err}");
            }
        }
    }
}

#[test]
fn lp_trace_never_increases_and_matches_the_exact_distance() {
    let mut rng = common::rng(21);
    for _ in 0..10 {
        let depth = rng.gen_range(2..=3);
        let original = common::random_tree(&mut rng, depth, 4, 2);
        let start = common::random_tree(&mut rng, depth, 2, 2);
        let (tree, report) = reduce_tree(&original, &start, &ReductionConfig::default()).unwrap();
        assert!(tree.validate().is_empty());
        let mut previous = report.initial_delta;
        for &delta in &report.delta_trace {
            assert!(delta <= previous + 1e-9 * report.initial_delta.max(1.0));
            previous = delta;
        }
        let (exact, _) = nested_distance(&original, &tree, 2.0).unwrap();
        assert!((exact - report.final_nd).abs() < 1e-6, "{exact} vs {}", report.final_nd);
    }
}

#[test]
fn worker_count_does_not_change_the_result() {
    let mut rng = common::rng(22);
    let original = common::random_tree(&mut rng, 3, 4, 1);
    let start = common::random_tree(&mut rng, 3, 2, 1);
    for (solver, exact) in [(SolverKind::Lp, true), (SolverKind::Mam, false), (SolverKind::Ibp, false)] {
        let run = |workers| {
            let config = ReductionConfig { solver, workers, ..Default::default() };
            reduce_tree(&original, &start, &config).unwrap()
        };
        let (one_tree, one) = run(1);
        let (many_tree, many) = run(4);
        if exact {
            assert_eq!(one.delta_trace, many.delta_trace);
            assert_eq!(one.solves, many.solves);
            assert_eq!(one_tree, many_tree);
        } else {
            for (x, y) in one.delta_trace.iter().zip(&many.delta_trace) {
                assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }
}

#[test]
fn optimal_start_plan_reproduces_the_nested_distance() {
    let mut rng = common::rng(23);
    let (a, b) = common::random_pair(&mut rng, 3, 3, 1);
    let (plan, costs) = optimal_plan(&a, &b, 2.0).unwrap();
    let (nd, _) = nested_distance(&a, &b, 2.0).unwrap();
    assert!((costs.distance() - nd).abs() < 1e-12);
    assert!(feasibility_error(&a, &b, &plan) < 1e-9);
}

#[test]
fn mismatched_depths_fail_before_iterating() {
    let mut rng = common::rng(24);
    let a = common::random_tree(&mut rng, 3, 3, 1);
    let b = common::random_tree(&mut rng, 2, 2, 1);
    assert!(matches!(reduce_tree(&a, &b, &ReductionConfig::default()), Err(Error::Dimension(_))));
    let bad_tol = ReductionConfig { tol: 0.0, ..Default::default() };
    assert!(reduce_tree(&a, &a, &bad_tol).is_err());
}

#[test]
fn auto_records_its_choices() {
    let mut rng = common::rng(25);
    let original = common::random_tree(&mut rng, 2, 5, 1);
    let start = random_init(&[2, 2], 1, -10.0, 10.0, 3).unwrap();
    let config = ReductionConfig { solver: SolverKind::Auto, n_big: 1, ..Default::default() };
    let (_, report) = reduce_tree(&original, &start, &config).unwrap();
    assert!(!report.solves.is_empty());
    assert!(report.solves.iter().all(|s| s.solver != SolverKind::Auto));
    assert!(report.solves.iter().any(|s| s.solver == SolverKind::Mam));
}
