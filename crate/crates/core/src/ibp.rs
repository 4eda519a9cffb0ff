//! Iterative Bregman projections for the entropy-regularized barycenter.
//!
//! Each sweep runs `v ← q ⊘ Kᵀu` for every measure, then takes the weighted
//! geometric mean `p = Π (Kv)^{w_m}`, then `u ← p ⊘ Kv`, which solves
//! `min Σ_m w_m KL(π^m | K^m)` over coupled plans.
//!
//! The problem's costs carry the weights (`D^m = α_m δ^m`), while the weights
//! also enter the geometric mean. Kernels are therefore built from the
//! unweighted costs, `exp(−λ(δ^m − min δ^m))`, so each weight counts once.
//! The shift is a constant factor on `K` that the scalings absorb.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::ot::{BarycenterProblem, BarycenterSolution, TransportPlanSet};

const FLOOR: f64 = 1e-300;

#[derive(Clone, Debug)]
pub struct IbpConfig {
    /// Inverse temperature `λ` of the kernels.
    pub lambda: f64,
    /// Stop once successive barycenters differ by at most this in sup norm
    /// and every plan's row sums match the barycenter to the same tolerance.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for IbpConfig {
    fn default() -> Self {
        Self { lambda: 100.0, tolerance: 1e-8, max_iter: 10_000 }
    }
}

struct Measure {
    kernel: Array2<f64>,
    marginal: Array1<f64>,
    u: Array1<f64>,
    v: Array1<f64>,
    kv: Array1<f64>,
    weight: f64,
}

fn guarded_div(a: &Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
    Array1::from_shape_fn(a.len(), |i| a[i] / b[i].max(FLOOR))
}

fn kernels(problem: &BarycenterProblem, lambda: f64) -> Result<Vec<Array2<f64>>> {
    (0..problem.measures())
        .map(|m| {
            let w = problem.weights()[m];
            let d = if w > 0.0 { problem.cost(m) / w } else { problem.cost(m).clone() };
            let lo = d.fold(f64::INFINITY, |a, &b| a.min(b));
            let hi = d.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let k = d.mapv(|x| (-lambda * (x - lo)).exp());
            if k.iter().any(|x| *x == 0.0 || !x.is_finite()) {
                return Err(Error::RegularizationOverflow { lambda, scaled_cost: lambda * (hi - lo) });
            }
            Ok(k)
        })
        .collect()
}

/// Entropic barycenter by iterative Bregman projections. Weights are
/// normalized internally; zero-weight measures are still scaled to their
/// marginals but do not enter the geometric mean. `λ` applies to the
/// unweighted costs `D^m / α_m`.
///
/// Returned plans have exact column sums; their row sums agree with the
/// barycenter only approximately.
pub fn ibp_solve(problem: &BarycenterProblem, config: &IbpConfig) -> Result<BarycenterSolution> {
    if !(config.lambda > 0.0 && config.lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {}", config.lambda)));
    }
    let r = problem.support();
    let total_weight: f64 = problem.weights().iter().sum();
    let mut measures: Vec<Measure> = kernels(problem, config.lambda)?
        .into_iter()
        .enumerate()
        .map(|(m, kernel)| {
            let s = kernel.ncols();
            Measure {
                kernel,
                marginal: Array1::from(problem.marginal(m).to_vec()),
                u: Array1::ones(r),
                v: Array1::ones(s),
                kv: Array1::ones(r),
                weight: problem.weights()[m] / total_weight,
            }
        })
        .collect();

    let mut p = Array1::from_elem(r, 1.0 / r as f64);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        for ms in measures.iter_mut() {
            ms.v = guarded_div(&ms.marginal, &ms.kernel.t().dot(&ms.u));
            ms.kv = ms.kernel.dot(&ms.v);
        }
        // Row sums of the current plans diag(u) K diag(v) against p.
        let residual = measures
            .iter()
            .flat_map(|ms| ms.u.iter().zip(&ms.kv).zip(&p).map(|((u, k), p)| (u * k - p).abs()))
            .fold(0.0f64, f64::max);
        if iterations > 0 && change <= config.tolerance && residual <= config.tolerance {
            converged = true;
            break;
        }
        if iterations == config.max_iter {
            break;
        }
        iterations += 1;
        let mut log_p = Array1::<f64>::zeros(r);
        for ms in measures.iter().filter(|ms| ms.weight > 0.0) {
            log_p.zip_mut_with(&ms.kv, |acc, &k| *acc += ms.weight * k.max(FLOOR).ln());
        }
        let next = log_p.mapv(f64::exp);
        for ms in measures.iter_mut() {
            ms.u = guarded_div(&next, &ms.kv);
        }
        change = next.iter().zip(&p).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        p = next;
    }

    let plans: Vec<Array2<f64>> = measures
        .iter()
        .map(|ms| {
            let (u, v) = (&ms.u, &ms.v);
            Array2::from_shape_fn(ms.kernel.dim(), |(i, j)| u[i] * ms.kernel[(i, j)] * v[j])
        })
        .collect();
    let total = p.sum();
    let barycenter = p.iter().map(|x| x / total).collect();
    Ok(BarycenterSolution {
        objective: problem.objective(&plans),
        plans: TransportPlanSet { plans, barycenter },
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::barycenter_lp;
    use ndarray::array;

    #[test]
    fn one_by_one() {
        let p = BarycenterProblem::new(vec![1.0], vec![vec![1.0]], vec![array![[2.5]]]).unwrap();
        let sol = ibp_solve(&p, &IbpConfig::default()).unwrap();
        assert_eq!(sol.barycenter(), &[1.0]);
        assert!((sol.plans.plans[0][(0, 0)] - 1.0).abs() < 1e-15);
        assert!((sol.objective - 2.5).abs() < 1e-12);
    }

    #[test]
    fn constant_cost_for_any_lambda() {
        let p = BarycenterProblem::new(vec![1.0], vec![vec![0.3, 0.7]], vec![Array2::from_elem((3, 2), 4.0)]).unwrap();
        for lambda in [0.1, 1.0, 100.0] {
            let sol = ibp_solve(&p, &IbpConfig { lambda, ..Default::default() }).unwrap();
            assert!((sol.objective - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn columns_are_exact() {
        let p = BarycenterProblem::weighted(
            vec![0.4, 0.6],
            vec![vec![0.25, 0.75], vec![0.5, 0.5]],
            vec![array![[0.0, 1.0], [1.0, 0.2]], array![[0.3, 0.9], [0.5, 0.1]]],
        )
        .unwrap();
        let sol = ibp_solve(&p, &IbpConfig::default()).unwrap();
        assert!(sol.plans.column_error(&p) < 1e-12);
        let exact = barycenter_lp(&p).unwrap().objective;
        assert!((sol.objective - exact).abs() <= 0.02 * exact);
    }

    #[test]
    fn overflow_is_reported() {
        let p = BarycenterProblem::new(vec![1.0], vec![vec![0.5, 0.5]], vec![array![[0.0, 1e4]]]).unwrap();
        match ibp_solve(&p, &IbpConfig::default()) {
            Err(Error::RegularizationOverflow { lambda, scaled_cost }) => {
                assert_eq!(lambda, 100.0);
                assert_eq!(scaled_cost, 1e6);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }
}
