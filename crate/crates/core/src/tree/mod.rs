//! Scenario-tree data model.
//!
//! A tree is stored as flat, index-based arrays: parent links, stages,
//! a CSR child list and a dense `N x d` quantizer block. Node `0` is the
//! root. Probabilities are unconditional; conditional probabilities are
//! derived on demand.

mod cost;
mod io;
mod random;

use std::fmt;

use crate::error::{Error, Result};

pub use cost::{path_cost, path_cost_tables, stage_distance};
pub use io::{load, save, TreeFile, TreeNodeRecord};
pub use random::{generate_random, layered_tree};

/// Absolute tolerance for the probability-mass invariants.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A rooted scenario tree with `d`-dimensional quantizers.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    dim: usize,
    parent: Vec<Option<usize>>,
    stage: Vec<usize>,
    quantizer: Vec<f64>,
    prob: Vec<f64>,
    child_start: Vec<usize>,
    child_list: Vec<usize>,
    levels: Vec<Vec<usize>>,
    level_pos: Vec<usize>,
}

/// A pair of same-stage nodes, one from the original tree and one from the
/// reduced tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodePair {
    pub original: usize,
    pub reduced: usize,
}

impl NodePair {
    pub fn new(original: &ScenarioTree, m: usize, reduced: &ScenarioTree, n: usize) -> Result<Self> {
        if original.stage(m) != reduced.stage(n) {
            return Err(Error::Dimension(format!(
                "node pair ({m}, {n}) spans stages {} and {}",
                original.stage(m),
                reduced.stage(n)
            )));
        }
        Ok(Self { original: m, reduced: n })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    NegativeProbability { prob: f64 },
    NonFinite,
    /// `prob(n)` differs from the sum over its children.
    ChildSum { expected: f64, actual: f64 },
    /// The root (and hence the leaf layer) does not carry unit mass.
    RootMass { prob: f64 },
    /// A leaf sits above the last stage.
    LeafStage { stage: usize, depth: usize },
}

/// One broken invariant, attributed to a node.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub node: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.node;
        match &self.kind {
            ViolationKind::NegativeProbability { prob } => write!(f, "node {n}: negative probability {prob}"),
            ViolationKind::NonFinite => write!(f, "node {n}: non-finite probability or quantizer"),
            ViolationKind::ChildSum { expected, actual } => {
                write!(f, "node {n}: probability {expected} but children sum to {actual}")
            }
            ViolationKind::RootMass { prob } => write!(f, "node {n}: root probability {prob} is not 1"),
            ViolationKind::LeafStage { stage, depth } => {
                write!(f, "node {n}: leaf at stage {stage}, expected stage {depth}")
            }
        }
    }
}

impl ScenarioTree {
    /// Builds a tree from per-node parent links, a flat `N x dim` quantizer
    /// block and unconditional probabilities.
    ///
    /// Only structural problems are rejected here (roots, dangling parents,
    /// cycles). Probability invariants are reported by [`ScenarioTree::validate`].
    pub fn from_parts(dim: usize, parent: Vec<Option<usize>>, quantizer: Vec<f64>, prob: Vec<f64>) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::Structure { node: 0, reason: "tree has no nodes".into() });
        }
        if dim == 0 {
            return Err(Error::Dimension("quantizer dimension must be at least 1".into()));
        }
        if prob.len() != n {
            return Err(Error::Dimension(format!("{} probabilities for {n} nodes", prob.len())));
        }
        if quantizer.len() != n * dim {
            return Err(Error::Dimension(format!(
                "quantizer block has {} values, expected {n} x {dim}",
                quantizer.len()
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parent[i].is_none()).collect();
        match roots.as_slice() {
            [0] => {}
            [] => return Err(Error::Structure { node: 0, reason: "no root node".into() }),
            [r] => return Err(Error::Structure { node: *r, reason: "root must have id 0".into() }),
            [_, second, ..] => {
                return Err(Error::Structure { node: *second, reason: format!("{} root nodes", roots.len()) })
            }
        }
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::Structure { node: i, reason: format!("parent {p} out of range") });
                }
                if p == i {
                    return Err(Error::Structure { node: i, reason: "node is its own parent".into() });
                }
            }
        }

        // Stages by walking up to the first node with a known stage.
        let mut stage = vec![usize::MAX; n];
        stage[0] = 0;
        let mut chain = Vec::new();
        for start in 0..n {
            let mut cur = start;
            chain.clear();
            while stage[cur] == usize::MAX {
                chain.push(cur);
                if chain.len() > n {
                    return Err(Error::Structure { node: start, reason: "cycle in parent links".into() });
                }
                cur = parent[cur].expect("only the root has no parent");
            }
            let mut s = stage[cur];
            for &c in chain.iter().rev() {
                s += 1;
                stage[c] = s;
            }
        }

        let mut counts = vec![0usize; n + 1];
        for p in parent.iter().flatten() {
            counts[*p + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let child_start = counts;
        let mut fill = child_start.clone();
        let mut child_list = vec![0usize; n - 1];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                child_list[fill[p]] = i;
                fill[p] += 1;
            }
        }

        let depth = stage.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); depth + 1];
        let mut level_pos = vec![0usize; n];
        for i in 0..n {
            level_pos[i] = levels[stage[i]].len();
            levels[stage[i]].push(i);
        }

        Ok(Self { dim, parent, stage, quantizer, prob, child_start, child_list, levels, level_pos })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Quantizer dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index `T` of the last stage.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn stage(&self, node: usize) -> usize {
        self.stage[node]
    }

    pub fn quantizer(&self, node: usize) -> &[f64] {
        &self.quantizer[node * self.dim..(node + 1) * self.dim]
    }

    /// Flat `N x d` quantizer block, row per node.
    pub fn quantizers(&self) -> &[f64] {
        &self.quantizer
    }

    pub fn prob(&self, node: usize) -> f64 {
        self.prob[node]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.child_list[self.child_start[node]..self.child_start[node + 1]]
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.child_start[node] == self.child_start[node + 1]
    }

    /// Nodes of stage `t`, in increasing id order.
    pub fn stage_nodes(&self, t: usize) -> &[usize] {
        &self.levels[t]
    }

    /// Position of `node` inside [`ScenarioTree::stage_nodes`] of its stage.
    pub fn level_pos(&self, node: usize) -> usize {
        self.level_pos[node]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| self.is_leaf(n))
    }

    /// Root-to-node path, root first.
    pub fn path(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Whether `ancestor` lies strictly above `node` on its root path.
    pub fn is_ancestor(&self, ancestor: usize, node: usize) -> bool {
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            if p == ancestor {
                return true;
            }
            cur = p;
        }
        false
    }

    /// Replaces all quantizers at once.
    pub fn with_quantizers(mut self, quantizer: Vec<f64>) -> Result<Self> {
        if quantizer.len() != self.quantizer.len() {
            return Err(Error::Dimension(format!(
                "quantizer block has {} values, expected {}",
                quantizer.len(),
                self.quantizer.len()
            )));
        }
        self.quantizer = quantizer;
        Ok(self)
    }

    /// Replaces all probabilities at once.
    pub fn with_probabilities(mut self, prob: Vec<f64>) -> Result<Self> {
        if prob.len() != self.prob.len() {
            return Err(Error::Dimension(format!("{} probabilities for {} nodes", prob.len(), self.len())));
        }
        self.prob = prob;
        Ok(self)
    }

    /// Checks every probability and stage invariant; an empty list means
    /// the tree is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let depth = self.depth();
        for n in 0..self.len() {
            let p = self.prob[n];
            if !p.is_finite() || self.quantizer(n).iter().any(|x| !x.is_finite()) {
                out.push(Violation { node: n, kind: ViolationKind::NonFinite });
                continue;
            }
            if p < 0.0 {
                out.push(Violation { node: n, kind: ViolationKind::NegativeProbability { prob: p } });
            }
            if self.is_leaf(n) {
                if self.stage[n] != depth {
                    out.push(Violation { node: n, kind: ViolationKind::LeafStage { stage: self.stage[n], depth } });
                }
            } else {
                let sum = compensated_sum(self.children(n).iter().map(|&c| self.prob[c]));
                if (sum - p).abs() > MASS_TOLERANCE {
                    out.push(Violation { node: n, kind: ViolationKind::ChildSum { expected: p, actual: sum } });
                }
            }
        }
        let root = self.prob[0];
        if root.is_finite() && (root - 1.0).abs() > MASS_TOLERANCE {
            out.push(Violation { node: 0, kind: ViolationKind::RootMass { prob: root } });
        }
        out
    }

    /// `validate`, as a `Result`.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// `P(i | m) = P(i) / P(m)` for `m` an ancestor of `i`.
    pub fn conditional_prob(&self, node: usize, ancestor: usize) -> Result<f64> {
        if !self.is_ancestor(ancestor, node) {
            return Err(Error::Domain(format!("node {ancestor} is not an ancestor of node {node}")));
        }
        let pm = self.prob[ancestor];
        if pm <= 0.0 {
            return Err(Error::ZeroProbability { node: ancestor });
        }
        Ok(self.prob[node] / pm)
    }

    /// Conditional distribution over the children of `node`, normalized to
    /// sum to one. Zero-mass nodes get the uniform distribution.
    pub fn conditional_children(&self, node: usize) -> Vec<f64> {
        let children = self.children(node);
        let total: f64 = children.iter().map(|&c| self.prob[c]).sum();
        if total > 0.0 && self.prob[node] > 0.0 {
            children.iter().map(|&c| self.prob[c] / total).collect()
        } else {
            vec![1.0 / children.len() as f64; children.len()]
        }
    }

    /// Number of children of each node at stage `t`, or `None` when the
    /// stage is not uniformly branched.
    pub fn uniform_branching(&self, t: usize) -> Option<usize> {
        let nodes = self.stage_nodes(t);
        let b = self.children(nodes[0]).len();
        nodes.iter().all(|&n| self.children(n).len() == b).then_some(b)
    }
}

/// Neumaier-compensated summation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
