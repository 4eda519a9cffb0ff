use ndarray::Array2;

use super::ScenarioTree;
use crate::error::{Error, Result};

/// `‖x − y‖^order` in the Euclidean norm. Order 2 skips the square root.
#[inline]
pub fn stage_distance(x: &[f64], y: &[f64], order: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if order == 2.0 {
        sq
    } else {
        sq.sqrt().powf(order)
    }
}

fn check_compatible(a: &ScenarioTree, b: &ScenarioTree, order: f64) -> Result<()> {
    if a.depth() != b.depth() {
        return Err(Error::Dimension(format!("trees have {} and {} stages", a.depth() + 1, b.depth() + 1)));
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("quantizer dimensions {} and {}", a.dim(), b.dim())));
    }
    if !(order >= 1.0 && order.is_finite()) {
        return Err(Error::Domain(format!("order must be in [1, inf), got {order}")));
    }
    Ok(())
}

/// Leaf-to-leaf path cost, summed stage by stage along both root paths:
/// `Σ_t ‖ξ(n_t) − ξ'(n̄_t)‖^order`.
pub fn path_cost(a: &ScenarioTree, i: usize, b: &ScenarioTree, j: usize, order: f64) -> Result<f64> {
    check_compatible(a, b, order)?;
    if !a.is_leaf(i) || !b.is_leaf(j) {
        return Err(Error::Domain(format!("path_cost needs leaves, got nodes {i} and {j}")));
    }
    if a.stage(i) != b.stage(j) {
        return Err(Error::Dimension(format!("leaves at stages {} and {}", a.stage(i), b.stage(j))));
    }
    let (mut x, mut y) = (i, j);
    let mut total = stage_distance(a.quantizer(x), b.quantizer(y), order);
    while let (Some(px), Some(py)) = (a.parent(x), b.parent(y)) {
        x = px;
        y = py;
        total += stage_distance(a.quantizer(x), b.quantizer(y), order);
    }
    Ok(total)
}

/// Accumulated path costs for every same-stage node pair: entry `[t][(m, n)]`
/// is the cost of the root-to-`m` path against the root-to-`n` path, indexed by
/// [`ScenarioTree::level_pos`]. The last table holds the leaf costs.
pub fn path_cost_tables(a: &ScenarioTree, b: &ScenarioTree, order: f64) -> Result<Vec<Array2<f64>>> {
    check_compatible(a, b, order)?;
    let depth = a.depth();
    let mut tables: Vec<Array2<f64>> = Vec::with_capacity(depth + 1);
    for t in 0..=depth {
        let (na, nb) = (a.stage_nodes(t), b.stage_nodes(t));
        let mut table = Array2::zeros((na.len(), nb.len()));
        for (pi, &m) in na.iter().enumerate() {
            let base_row = a.parent(m).map(|p| a.level_pos(p));
            for (pj, &n) in nb.iter().enumerate() {
                let above = match (base_row, b.parent(n)) {
                    (Some(r), Some(q)) => tables[t - 1][(r, b.level_pos(q))],
                    _ => 0.0,
                };
                table[(pi, pj)] = above + stage_distance(a.quantizer(m), b.quantizer(n), order);
            }
        }
        tables.push(table);
    }
    Ok(tables)
}
