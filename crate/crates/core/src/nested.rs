//! Nested distance by backward recursion over same-stage node pairs.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ot::wasserstein_lp;
use crate::tree::{path_cost_tables, ScenarioTree};

/// Stage-indexed conditional costs `δ(m, n)`. Entry `[t][(a, b)]` belongs to
/// the nodes at level positions `a` and `b` of stage `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    pub order: f64,
    pub stages: Vec<Array2<f64>>,
}

impl CostTable {
    pub fn stage(&self, t: usize) -> &Array2<f64> {
        &self.stages[t]
    }

    /// Cost between the two roots.
    pub fn root(&self) -> f64 {
        self.stages[0][(0, 0)]
    }

    /// `δ(0,0)^{1/order}`.
    pub fn distance(&self) -> f64 {
        root_distance(self.root(), self.order)
    }
}

pub(crate) fn root_distance(delta: f64, order: f64) -> f64 {
    let d = delta.max(0.0);
    if order == 2.0 {
        d.sqrt()
    } else {
        d.powf(1.0 / order)
    }
}

/// Block of `table` between the children of `m` (rows, tree `a`) and of `n`
/// (columns, tree `b`).
pub(crate) fn child_block(a: &ScenarioTree, m: usize, b: &ScenarioTree, n: usize, table: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = (a.children(m), b.children(n));
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| table[(a.level_pos(rows[i]), b.level_pos(cols[j]))])
}

/// Exact nested distance of the given order between two trees with the same
/// number of stages and quantizer dimension, together with every conditional
/// cost of the recursion.
pub fn nested_distance(a: &ScenarioTree, b: &ScenarioTree, order: f64) -> Result<(f64, CostTable)> {
    let (table, _) = nested_recursion(a, b, order)?;
    Ok((table.distance(), table))
}

/// Backward recursion keeping the optimal conditional plans, indexed like
/// the cost table: `[t][a * |N'_t| + b]`, children of `m` × children of `n`.
pub(crate) fn nested_recursion(a: &ScenarioTree, b: &ScenarioTree, order: f64) -> Result<(CostTable, Vec<Vec<Array2<f64>>>)> {
    let mut tables = path_cost_tables(a, b, order)?;
    let depth = a.depth();
    let mut plans = vec![Vec::new(); depth];
    for t in (0..depth).rev() {
        let (na, nb) = (a.stage_nodes(t), b.stage_nodes(t));
        let below = &tables[t + 1];
        let entries: Vec<(f64, Array2<f64>)> = (0..na.len() * nb.len())
            .into_par_iter()
            .map(|k| {
                let (m, n) = (na[k / nb.len()], nb[k % nb.len()]);
                let cost = child_block(a, m, b, n, below);
                wasserstein_lp(&a.conditional_children(m), &b.conditional_children(n), cost.view())
            })
            .collect::<Result<_>>()?;
        let (costs, stage_plans): (Vec<f64>, Vec<Array2<f64>>) = entries.into_iter().unzip();
        tables[t] = Array2::from_shape_vec((na.len(), nb.len()), costs).map_err(|e| Error::Dimension(e.to_string()))?;
        plans[t] = stage_plans;
    }
    Ok((CostTable { order, stages: tables }, plans))
}
