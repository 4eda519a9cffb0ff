//! Discrete optimal transport: exact transport and barycenter LPs, and the
//! scaled-simplex projection used by the averaged-marginals solver.

mod barycenter;
mod projection;
pub mod simplex;
mod transport;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use barycenter::{barycenter_lp, barycenter_lp_decomposed, barycenter_lp_direct};
pub use projection::{project_into, project_scaled_simplex};
pub use transport::{transport, wasserstein_lp, TransportSolution};

/// Tolerance on `Σ q = 1` when a problem is built.
const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Fixed-support barycenter of `M` discrete measures.
///
/// Measure `m` has marginal `q^m` over `S^m` atoms and an `R × S^m` cost
/// matrix that already includes its weight `α_m`. The barycenter lives on
/// `R` atoms.
#[derive(Clone, Debug)]
pub struct BarycenterProblem {
    support: usize,
    weights: Vec<f64>,
    marginals: Vec<Vec<f64>>,
    costs: Vec<Array2<f64>>,
}

impl BarycenterProblem {
    pub fn new(weights: Vec<f64>, marginals: Vec<Vec<f64>>, costs: Vec<Array2<f64>>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::Dimension("a barycenter needs at least one measure".into()));
        }
        if marginals.len() != m || costs.len() != m {
            return Err(Error::Dimension(format!(
                "{m} weights, {} marginals, {} cost matrices",
                marginals.len(),
                costs.len()
            )));
        }
        let support = costs[0].nrows();
        if support == 0 {
            return Err(Error::Dimension("barycenter support is empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Domain("all weights are zero".into()));
        }
        for (k, (q, d)) in marginals.iter().zip(&costs).enumerate() {
            if d.dim() != (support, q.len()) || q.is_empty() {
                return Err(Error::Dimension(format!(
                    "measure {k}: cost is {:?}, expected ({support}, {})",
                    d.dim(),
                    q.len()
                )));
            }
            if q.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Domain(format!("measure {k}: marginal has negative entries")));
            }
            let total: f64 = q.iter().sum();
            if (total - 1.0).abs() > MARGINAL_TOLERANCE {
                return Err(Error::Domain(format!("measure {k}: marginal sums to {total}")));
            }
            if d.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Domain(format!("measure {k}: costs must be finite and nonnegative")));
            }
        }
        Ok(Self { support, weights, marginals, costs })
    }

    /// Builds `D^m = α_m · base^m` from unweighted costs.
    pub fn weighted(weights: Vec<f64>, marginals: Vec<Vec<f64>>, base_costs: Vec<Array2<f64>>) -> Result<Self> {
        let costs = base_costs.into_iter().zip(&weights).map(|(d, &w)| d * w).collect();
        Self::new(weights, marginals, costs)
    }

    pub fn measures(&self) -> usize {
        self.weights.len()
    }

    /// Size `R` of the barycenter support.
    pub fn support(&self) -> usize {
        self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn marginal(&self, m: usize) -> &[f64] {
        &self.marginals[m]
    }

    pub fn cost(&self, m: usize) -> &Array2<f64> {
        &self.costs[m]
    }

    /// Largest marginal support `max_m S^m`.
    pub fn max_atoms(&self) -> usize {
        self.marginals.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_atoms(&self) -> usize {
        self.marginals.iter().map(Vec::len).sum()
    }

    /// `Σ_m ⟨D^m, π^m⟩`.
    pub fn objective(&self, plans: &[Array2<f64>]) -> f64 {
        self.costs.iter().zip(plans).map(|(d, p)| (d * p).sum()).sum()
    }

    /// Objective with the barycenter pinned to a single atom.
    pub(crate) fn single_atom_objective(&self) -> f64 {
        self.costs.iter().zip(&self.marginals).map(|(d, q)| d.row(0).iter().zip(q).map(|(a, b)| a * b).sum::<f64>()).sum()
    }

    /// Product plans `p qᵀ`, feasible for any barycenter `p`.
    pub fn product_plans(&self, p: &[f64]) -> Vec<Array2<f64>> {
        self.marginals.iter().map(|q| Array2::from_shape_fn((p.len(), q.len()), |(r, s)| p[r] * q[s])).collect()
    }
}

/// Coupled plans `π^m` (`R × S^m`) and their common row marginal `p`.
#[derive(Clone, Debug)]
pub struct TransportPlanSet {
    pub plans: Vec<Array2<f64>>,
    pub barycenter: Vec<f64>,
}

impl TransportPlanSet {
    /// Largest deviation of any plan's column sums from the measure marginals.
    pub fn column_error(&self, problem: &BarycenterProblem) -> f64 {
        self.plans
            .iter()
            .enumerate()
            .flat_map(|(m, plan)| {
                let q = problem.marginal(m);
                plan.columns().into_iter().zip(q).map(|(c, &qs)| (c.sum() - qs).abs()).collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any plan's row sums from the barycenter.
    pub fn row_error(&self) -> f64 {
        self.plans
            .iter()
            .flat_map(|plan| plan.rows().into_iter().zip(&self.barycenter).map(|(r, &p)| (r.sum() - p).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }
}

/// Moves `plan` onto the transport polytope of `(rows, cols)` while keeping it
/// nonnegative: rows are scaled down where they overflow, then columns, and
/// the remaining deficit is filled by a rank-one product. Both marginals must
/// carry the same mass. The cost changes by at most `max(D) · ‖deficit‖₁`.
pub fn round_to_marginals(plan: &mut Array2<f64>, rows: &[f64], cols: &[f64]) {
    for (mut row, &target) in plan.rows_mut().into_iter().zip(rows) {
        let sum = row.sum();
        if sum > target {
            let scale = if sum > 0.0 { target / sum } else { 0.0 };
            row.mapv_inplace(|x| x * scale);
        }
    }
    for (mut col, &target) in plan.columns_mut().into_iter().zip(cols) {
        let sum = col.sum();
        if sum > target {
            let scale = if sum > 0.0 { target / sum } else { 0.0 };
            col.mapv_inplace(|x| x * scale);
        }
    }
    let row_deficit: Vec<f64> = plan.rows().into_iter().zip(rows).map(|(r, &t)| (t - r.sum()).max(0.0)).collect();
    let col_deficit: Vec<f64> = plan.columns().into_iter().zip(cols).map(|(c, &t)| (t - c.sum()).max(0.0)).collect();
    let mass: f64 = row_deficit.iter().sum();
    if mass > 0.0 {
        for (i, &a) in row_deficit.iter().enumerate() {
            for (j, &b) in col_deficit.iter().enumerate() {
                plan[(i, j)] += a * b / mass;
            }
        }
    }
}

/// Outcome of one barycenter solve.
#[derive(Clone, Debug)]
pub struct BarycenterSolution {
    pub objective: f64,
    pub plans: TransportPlanSet,
    pub iterations: usize,
    pub converged: bool,
}

impl BarycenterSolution {
    pub fn barycenter(&self) -> &[f64] {
        &self.plans.barycenter
    }
}
