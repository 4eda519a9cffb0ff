//! Timing of the probability step on trees of controlled structure: `n`
//! subtrees under the root, each with the same number of leaves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::random_init;
use crate::reduce::{reduce_tree, ReductionConfig, SolverKind};
use crate::tree::{layered_tree, ScenarioTree};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stage whose barycenter problems carry all `n` subtrees as measures.
const MEASURED_STAGE: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub solver: SolverKind,
    /// Subtrees under the root, i.e. measures per barycenter problem.
    pub n: usize,
    /// Leaves per subtree.
    pub branch: usize,
    /// Mean wall time of the measured stage over the outer iterations.
    pub seconds: f64,
    pub nd: f64,
}

/// Two-period tree: the root has `subtrees` children with `branching`
/// leaves each, uniform probabilities and quantizers uniform in `[-10, 10]`.
pub fn structure_tree(subtrees: usize, branching: usize, seed: u64) -> Result<ScenarioTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    layered_tree(&[subtrees, branching], 1, |q| q[0] = rng.gen_range(-10.0..=10.0), |b| vec![1.0 / b as f64; b])
}

/// Reduces [`structure_tree`] onto a root with one child and `reduced_branching`
/// leaves, so every stage-1 problem holds all `n` subtrees as measures. Runs
/// at most `iterations` outer iterations.
pub fn structure_run(
    subtrees: usize,
    branching: usize,
    reduced_branching: usize,
    solver: SolverKind,
    base: &ReductionConfig,
    iterations: usize,
    seed: u64,
) -> Result<BenchRow> {
    if iterations == 0 {
        return Err(Error::Domain("benchmark needs at least one iteration".into()));
    }
    let original = structure_tree(subtrees, branching, seed)?;
    let start = random_init(&[1, reduced_branching], 1, -10.0, 10.0, seed.wrapping_add(1))?;
    let config = ReductionConfig {
        solver,
        // Stop only once the plan stops improving.
        tol: f64::MIN_POSITIVE,
        max_iter: iterations,
        ..base.clone()
    };
    let (_, report) = reduce_tree(&original, &start, &config)?;
    let times: Vec<f64> = report.stage_seconds.iter().map(|s| s[MEASURED_STAGE]).collect();
    Ok(BenchRow {
        solver,
        n: subtrees,
        branch: branching,
        seconds: times.iter().sum::<f64>() / times.len() as f64,
        nd: report.final_nd,
    })
}

/// Every combination of `subtrees × branches × solvers`, in that nesting order.
pub fn structure_grid(
    subtrees: &[usize],
    branches: &[usize],
    solvers: &[SolverKind],
    base: &ReductionConfig,
    iterations: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(subtrees.len() * branches.len() * solvers.len());
    for &n in subtrees {
        for &b in branches {
            for &s in solvers {
                rows.push(structure_run(n, b, 2, s, base, iterations, seed)?);
            }
        }
    }
    Ok(rows)
}
