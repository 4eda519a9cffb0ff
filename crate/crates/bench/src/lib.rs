//! Fixtures shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ndarray::Array2;
use treeshrink::BarycenterProblem;

/// `measures` random marginals on `atoms` points, costs uniform in `[0, 1)`
/// against a support of `support` points, random weights.
pub fn random_problem(measures: usize, support: usize, atoms: usize, seed: u64) -> BarycenterProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..measures).map(|_| rng.gen_range(0.1..1.0)).collect();
    let marginals = (0..measures)
        .map(|_| {
            let raw: Vec<f64> = (0..atoms).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let costs = (0..measures).map(|_| Array2::from_shape_fn((support, atoms), |_| rng.gen::<f64>())).collect();
    BarycenterProblem::weighted(weights, marginals, costs).expect("well-formed problem")
}
