use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nested::{nested_recursion, CostTable};
use crate::tree::ScenarioTree;

/// Conditional transport plans between an original and a reduced tree.
///
/// `blocks[t][a * |N'_t| + b]` is `π(i, j | m, n)` for the nodes `m`, `n` at
/// level positions `a`, `b` of stage `t`: rows are the children of `m`, columns
/// the children of `n`. `joint[t]` holds the unconditional `π(m, n)` for every
/// same-stage pair, with `joint[0] = [[1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalPlan {
    widths: Vec<usize>,
    blocks: Vec<Vec<Array2<f64>>>,
    joint: Vec<Array2<f64>>,
}

pub(crate) fn check_compatible(original: &ScenarioTree, reduced: &ScenarioTree) -> Result<()> {
    if original.depth() != reduced.depth() {
        return Err(Error::Dimension(format!(
            "original has {} stages, reduced has {}",
            original.depth() + 1,
            reduced.depth() + 1
        )));
    }
    if original.dim() != reduced.dim() {
        return Err(Error::Dimension(format!("quantizer dimensions {} and {}", original.dim(), reduced.dim())));
    }
    Ok(())
}

impl ConditionalPlan {
    pub(crate) fn from_blocks(original: &ScenarioTree, reduced: &ScenarioTree, blocks: Vec<Vec<Array2<f64>>>) -> Self {
        let widths = (0..=reduced.depth()).map(|t| reduced.stage_nodes(t).len()).collect();
        let mut plan = Self { widths, blocks, joint: Vec::new() };
        plan.recompose(original, reduced);
        plan
    }

    /// `π(·, · | m, n)` by node ids.
    pub fn conditional(&self, original: &ScenarioTree, m: usize, reduced: &ScenarioTree, n: usize) -> &Array2<f64> {
        let t = original.stage(m);
        &self.blocks[t][original.level_pos(m) * self.widths[t] + reduced.level_pos(n)]
    }

    pub(crate) fn block(&self, t: usize, a: usize, b: usize) -> &Array2<f64> {
        &self.blocks[t][a * self.widths[t] + b]
    }

    /// Unconditional `π(m, n)` over stage `t`, by level positions.
    pub fn joint(&self, t: usize) -> &Array2<f64> {
        &self.joint[t]
    }

    pub fn stages(&self) -> usize {
        self.joint.len()
    }

    /// Rebuilds the unconditional plans top-down:
    /// `π(i, j) = π(i, j | m, n) · π(m, n)`.
    fn recompose(&mut self, original: &ScenarioTree, reduced: &ScenarioTree) {
        let depth = original.depth();
        let mut joint = Vec::with_capacity(depth + 1);
        joint.push(Array2::from_elem((1, 1), 1.0));
        for t in 0..depth {
            let (na, nb) = (original.stage_nodes(t), reduced.stage_nodes(t));
            let mut next = Array2::zeros((original.stage_nodes(t + 1).len(), reduced.stage_nodes(t + 1).len()));
            for (a, &m) in na.iter().enumerate() {
                for (b, &n) in nb.iter().enumerate() {
                    let mass = joint[t][(a, b)];
                    if mass == 0.0 {
                        continue;
                    }
                    let block = &self.blocks[t][a * nb.len() + b];
                    for (ii, &i) in original.children(m).iter().enumerate() {
                        for (jj, &j) in reduced.children(n).iter().enumerate() {
                            next[(original.level_pos(i), reduced.level_pos(j))] = block[(ii, jj)] * mass;
                        }
                    }
                }
            }
            joint.push(next);
        }
        self.joint = joint;
    }
}

/// Starting plan `π⁰(i, j | m, n) = P(i|m) / |n+|`.
pub fn init_plan(original: &ScenarioTree, reduced: &ScenarioTree) -> Result<ConditionalPlan> {
    check_compatible(original, reduced)?;
    let blocks = (0..original.depth())
        .map(|t| {
            let (na, nb) = (original.stage_nodes(t), reduced.stage_nodes(t));
            let mut stage = Vec::with_capacity(na.len() * nb.len());
            for &m in na {
                let q = original.conditional_children(m);
                for &n in nb {
                    let width = reduced.children(n).len();
                    stage.push(Array2::from_shape_fn((q.len(), width), |(i, _)| q[i] / width as f64));
                }
            }
            stage
        })
        .collect();
    Ok(ConditionalPlan::from_blocks(original, reduced, blocks))
}

/// Plan of the nested distance between the two trees: every conditional
/// block is an optimal transport between children. Returned with its costs,
/// so `costs.root()` is the squared (for order 2) nested distance.
pub fn optimal_plan(original: &ScenarioTree, reduced: &ScenarioTree, order: f64) -> Result<(ConditionalPlan, CostTable)> {
    check_compatible(original, reduced)?;
    let (costs, blocks) = nested_recursion(original, reduced, order)?;
    Ok((ConditionalPlan::from_blocks(original, reduced, blocks), costs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{generate_random, layered_tree};

    #[test]
    fn uniform_ternary_against_binary() {
        let a = generate_random(2, 3, 1, 0.0, 1.0, 1).unwrap();
        let b = generate_random(2, 2, 1, 0.0, 1.0, 2).unwrap();
        let plan = init_plan(&a, &b).unwrap();
        for &m in a.stage_nodes(1) {
            for &n in b.stage_nodes(1) {
                assert!(plan.conditional(&a, m, &b, n).iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-15));
            }
        }
        let last = plan.joint(2);
        assert!((last.sum() - 1.0).abs() < 1e-12);
        for (row, &i) in last.rows().into_iter().zip(a.stage_nodes(2)) {
            assert!((row.sum() - a.prob(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_child_gets_the_conditional() {
        let a = layered_tree(&[2], 1, |_| {}, |_| vec![0.5, 0.5]).unwrap();
        let b = layered_tree(&[1], 1, |_| {}, |_| vec![1.0]).unwrap();
        let plan = init_plan(&a, &b).unwrap();
        let block = plan.conditional(&a, 0, &b, 0);
        assert_eq!(block.dim(), (2, 1));
        assert_eq!(block[(0, 0)], 0.5);
        assert_eq!(block[(1, 0)], 0.5);
    }

    #[test]
    fn half_split_over_two() {
        let a = layered_tree(&[2], 1, |_| {}, |_| vec![0.5, 0.5]).unwrap();
        let b = layered_tree(&[2], 1, |_| {}, |_| vec![0.5, 0.5]).unwrap();
        let plan = init_plan(&a, &b).unwrap();
        assert!(plan.conditional(&a, 0, &b, 0).iter().all(|&x| x == 0.25));
    }

    #[test]
    fn optimal_plan_of_a_copy_is_diagonal() {
        let a = generate_random(2, 3, 1, -1.0, 1.0, 5).unwrap();
        let (plan, costs) = optimal_plan(&a, &a, 2.0).unwrap();
        assert!(costs.root().abs() < 1e-12);
        for t in 0..=2 {
            let joint = plan.joint(t);
            for ((i, j), &x) in joint.indexed_iter() {
                let expected = if i == j { a.prob(a.stage_nodes(t)[i]) } else { 0.0 };
                assert!((x - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depth_mismatch() {
        let a = generate_random(2, 2, 1, 0.0, 1.0, 1).unwrap();
        let b = generate_random(1, 2, 1, 0.0, 1.0, 1).unwrap();
        assert!(init_plan(&a, &b).is_err());
    }
}
