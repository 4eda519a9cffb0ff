#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeshrink::{random_init, BarycenterProblem, ConditionalPlan, ScenarioTree};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Probability vector with entries bounded away from zero.
pub fn simplex_point(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random weights, marginals and base costs in `[0, scale)`; the problem
/// scales the costs by the weights.
pub fn random_problem(rng: &mut impl Rng, m: usize, r: usize, atoms: &[usize], scale: f64) -> BarycenterProblem {
    let weights = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    let marginals = (0..m).map(|k| simplex_point(rng, atoms[k])).collect();
    let costs = (0..m).map(|k| Array2::from_shape_fn((r, atoms[k]), |_| rng.gen_range(0.0..scale))).collect();
    BarycenterProblem::weighted(weights, marginals, costs).unwrap()
}

/// Layered tree with random branching per stage, random conditional
/// probabilities and quantizers in `[-10, 10]^dim`.
pub fn random_tree(rng: &mut impl Rng, depth: usize, max_branching: usize, dim: usize) -> ScenarioTree {
    let branching: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=max_branching)).collect();
    random_init(&branching, dim, -10.0, 10.0, rng.gen()).unwrap()
}

/// Two trees with the same depth and dimension.
pub fn random_pair(rng: &mut impl Rng, depth: usize, max_branching: usize, dim: usize) -> (ScenarioTree, ScenarioTree) {
    (random_tree(rng, depth, max_branching, dim), random_tree(rng, depth, max_branching, dim))
}

/// Largest deviation of the conditional plans from the original
/// conditionals, and of the leaf-stage joint plan from the leaf distribution.
pub fn feasibility_error(original: &ScenarioTree, reduced: &ScenarioTree, plan: &ConditionalPlan) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..original.depth() {
        for (a, &m) in original.stage_nodes(t).iter().enumerate() {
            let q = original.conditional_children(m);
            for (b, &n) in reduced.stage_nodes(t).iter().enumerate() {
                let block = plan.conditional(original, m, reduced, n);
                assert!(block.iter().all(|&x| x >= -1e-12));
                if plan.joint(t)[(a, b)] > 0.0 {
                    for (i, row) in block.rows().into_iter().enumerate() {
                        worst = worst.max((row.sum() - q[i]).abs());
                    }
                }
            }
        }
    }
    let leaves = plan.joint(original.depth());
    worst = worst.max((leaves.sum() - 1.0).abs());
    for (row, &i) in leaves.rows().into_iter().zip(original.stage_nodes(original.depth())) {
        worst = worst.max((row.sum() - original.prob(i)).abs());
    }
    worst
}
