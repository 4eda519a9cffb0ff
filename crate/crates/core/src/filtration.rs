//! Starting trees for the reduction: scenario sets, K-means and fast forward
//! selection fans, random layered trees and prefix merging.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tree::{layered_tree, stage_distance, ScenarioTree};

const MAX_LLOYD_ITERATIONS: usize = 300;
const INERTIA_TOLERANCE: f64 = 1e-6;

/// `S` scenario paths over stages `0..=T`, each stage a point in `ℝ^d`,
/// with a probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioMatrix {
    depth: usize,
    dim: usize,
    /// Row-major `S × (T+1)·d`.
    values: Vec<f64>,
    prob: Vec<f64>,
}

impl ScenarioMatrix {
    /// `paths[s]` lists the `(T+1)·d` values of scenario `s`, stage-major.
    /// Probabilities must be nonnegative and sum to one within `1e-9`; they
    /// are renormalized exactly.
    pub fn new(depth: usize, dim: usize, paths: Vec<Vec<f64>>, prob: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("scenario dimension must be at least 1".into()));
        }
        if paths.is_empty() {
            return Err(Error::Domain("no scenarios".into()));
        }
        if paths.len() != prob.len() {
            return Err(Error::Dimension(format!("{} scenarios, {} probabilities", paths.len(), prob.len())));
        }
        let width = (depth + 1) * dim;
        let mut values = Vec::with_capacity(paths.len() * width);
        for (s, path) in paths.into_iter().enumerate() {
            if path.len() != width {
                return Err(Error::Dimension(format!("scenario {s} has {} values, expected {width}", path.len())));
            }
            if path.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("scenario {s} has a non-finite value")));
            }
            values.extend(path);
        }
        if let Some(s) = prob.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain(format!("scenario {s} has probability {}", prob[s])));
        }
        let total: f64 = prob.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("scenario probabilities sum to {total}")));
        }
        let prob = prob.into_iter().map(|p| p / total).collect();
        Ok(Self { depth, dim, values, prob })
    }

    /// Reads rows `prob, x_{0,1..d}, …, x_{T,1..d}`; `T` follows from the
    /// column count. A leading header row is skipped.
    pub fn from_csv(reader: impl Read, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("scenario dimension must be at least 1".into()));
        }
        let mut csv = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut paths = Vec::new();
        let mut prob = Vec::new();
        let mut columns = None;
        for (line, record) in csv.records().enumerate() {
            let record = record?;
            if line == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
                continue;
            }
            let row: Vec<f64> = record
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: '{f}' is not a number", line + 1))))
                .collect::<Result<_>>()?;
            if row.len() < 1 + dim || (row.len() - 1) % dim != 0 {
                return Err(Error::Parse(format!(
                    "line {}: {} columns do not fit prob + (T+1) x {dim} values",
                    line + 1,
                    row.len()
                )));
            }
            if *columns.get_or_insert(row.len()) != row.len() {
                return Err(Error::Parse(format!("line {}: ragged row", line + 1)));
            }
            prob.push(row[0]);
            paths.push(row[1..].to_vec());
        }
        let columns = columns.ok_or_else(|| Error::Parse("no scenario rows".into()))?;
        Self::new((columns - 1) / dim - 1, dim, paths, prob)
    }

    pub fn load_csv(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?, dim)
    }

    /// Root-to-leaf paths of a tree, weighted by leaf probability.
    pub fn from_tree(tree: &ScenarioTree) -> Result<Self> {
        let (paths, prob) = tree
            .leaves()
            .map(|leaf| {
                let path: Vec<f64> = tree.path(leaf).iter().flat_map(|&n| tree.quantizer(n).to_vec()).collect();
                (path, tree.prob(leaf))
            })
            .unzip();
        Self::new(tree.depth(), tree.dim(), paths, prob)
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Last stage index `T`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn path(&self, s: usize) -> &[f64] {
        let w = (self.depth + 1) * self.dim;
        &self.values[s * w..(s + 1) * w]
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.prob[s]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    /// Path cost `Σ_t ‖x_t − y_t‖^order` between two scenarios.
    pub fn cost(&self, i: usize, j: usize, order: f64) -> f64 {
        path_distance(self.path(i), self.path(j), self.dim, order)
    }

    /// Fan tree: a root plus one chain per scenario.
    ///
    /// The root carries the probability-weighted mean of the stage-0 values,
    /// which is the shared value whenever the scenarios agree at stage 0.
    pub fn fan_tree(&self) -> Result<ScenarioTree> {
        let rows: Vec<&[f64]> = (0..self.len()).map(|s| self.path(s)).collect();
        fan(&rows, &self.prob, self.depth, self.dim)
    }
}

fn path_distance(x: &[f64], y: &[f64], dim: usize, order: f64) -> f64 {
    x.chunks(dim).zip(y.chunks(dim)).map(|(a, b)| stage_distance(a, b, order)).sum()
}

fn fan(paths: &[&[f64]], prob: &[f64], depth: usize, dim: usize) -> Result<ScenarioTree> {
    if depth == 0 {
        return Err(Error::Domain("a fan needs at least one stage after the root".into()));
    }
    let s = paths.len();
    let mut parent = vec![None];
    let mut node_prob = vec![1.0];
    let mut values = vec![0.0; dim];
    for (path, &p) in paths.iter().zip(prob) {
        for (x, y) in values.iter_mut().zip(&path[..dim]) {
            *x += p * y;
        }
    }
    // Breadth-first: stage t holds the t-th node of every chain.
    for t in 1..=depth {
        for (k, path) in paths.iter().enumerate() {
            parent.push(Some(if t == 1 { 0 } else { 1 + (t - 2) * s + k }));
            node_prob.push(prob[k]);
            values.extend_from_slice(&path[t * dim..(t + 1) * dim]);
        }
    }
    ScenarioTree::from_parts(dim, parent, values, node_prob)
}

/// Result of probability-weighted K-means on scenario paths.
#[derive(Clone, Debug)]
pub struct Clustering {
    /// One flattened centroid path per cluster.
    pub centroids: Vec<Vec<f64>>,
    /// Probability mass of each cluster.
    pub masses: Vec<f64>,
    /// Cluster of each scenario.
    pub assignment: Vec<usize>,
    /// `Σ_s p_s ‖x_s − c_{a(s)}‖²`.
    pub inertia: f64,
    pub iterations: usize,
}

fn squared(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(c, center)| (c, squared(point, center)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// K-means++ seeding followed by Lloyd iterations on the flattened paths,
/// both weighted by scenario probability. Stops when the inertia improves by
/// at most `1e-6` relative, or after 300 iterations.
pub fn kmeans(scenarios: &ScenarioMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let s = scenarios.len();
    if k == 0 || k > s {
        return Err(Error::Domain(format!("need 1 <= k <= {s} clusters, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = scenarios.probabilities();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; s];
    let mut dist = vec![f64::INFINITY; s];
    while centers.len() < k {
        let weights: Vec<f64> = (0..s).map(|i| if chosen[i] { 0.0 } else if centers.is_empty() { p[i] } else { p[i] * dist[i] }).collect();
        let pick = sample(&weights, &mut rng).unwrap_or_else(|| chosen.iter().position(|c| !c).expect("k <= S"));
        chosen[pick] = true;
        let center = scenarios.path(pick).to_vec();
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared(scenarios.path(i), &center));
        }
        centers.push(center);
    }

    let mut assignment = vec![0; s];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    let mut masses = vec![0.0; k];
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let nearest_all: Vec<(usize, f64)> = (0..s).into_par_iter().map(|i| nearest(scenarios.path(i), &centers)).collect();
        for (i, &(c, _)) in nearest_all.iter().enumerate() {
            assignment[i] = c;
        }
        let current: f64 = nearest_all.iter().zip(p).map(|(&(_, d), w)| w * d).sum();

        let width = centers[0].len();
        let mut sums = vec![vec![0.0; width]; k];
        masses = vec![0.0; k];
        for i in 0..s {
            let c = assignment[i];
            masses[c] += p[i];
            for (acc, x) in sums[c].iter_mut().zip(scenarios.path(i)) {
                *acc += p[i] * x;
            }
        }
        for c in 0..k {
            if masses[c] > 0.0 {
                centers[c] = sums[c].iter().map(|x| x / masses[c]).collect();
            } else {
                // Re-seed an empty cluster at the point worst served so far.
                let far = (0..s)
                    .filter(|&i| p[i] > 0.0 || masses.iter().all(|&m| m == 0.0))
                    .max_by(|&a, &b| nearest_all[a].1.total_cmp(&nearest_all[b].1).then(b.cmp(&a)))
                    .unwrap_or(0);
                centers[c] = scenarios.path(far).to_vec();
            }
        }
        let settled = inertia.is_finite() && inertia - current <= INERTIA_TOLERANCE * inertia;
        inertia = current;
        if settled && masses.iter().all(|&m| m > 0.0) {
            break;
        }
    }
    // Final assignment against the final centers.
    let nearest_all: Vec<(usize, f64)> = (0..s).map(|i| nearest(scenarios.path(i), &centers)).collect();
    masses = vec![0.0; k];
    for (i, &(c, _)) in nearest_all.iter().enumerate() {
        assignment[i] = c;
        masses[c] += p[i];
    }
    inertia = nearest_all.iter().zip(p).map(|(&(_, d), w)| w * d).sum();
    Ok(Clustering { centroids: centers, masses, assignment, inertia, iterations })
}

fn sample(weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if x < w {
                return Some(i);
            }
            x -= w;
        }
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// Fan tree of `k` K-means centroids, each branch weighted by its cluster mass.
pub fn kmeans_init(scenarios: &ScenarioMatrix, k: usize, seed: u64) -> Result<ScenarioTree> {
    let clusters = kmeans(scenarios, k, seed)?;
    let rows: Vec<&[f64]> = clusters.centroids.iter().map(Vec::as_slice).collect();
    fan(&rows, &clusters.masses, scenarios.depth(), scenarios.dim())
}

/// Scenarios kept by fast forward selection, in selection order, with the
/// probabilities they hold after redistribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub selected: Vec<usize>,
    pub prob: Vec<f64>,
}

/// Transport cost of moving every scenario to its nearest selected one:
/// `Σ_j p_j min_{i ∈ selected} c(i, j)`.
pub fn ffs_objective(scenarios: &ScenarioMatrix, selected: &[usize], order: f64) -> f64 {
    (0..scenarios.len())
        .map(|j| {
            let best = selected.iter().map(|&i| scenarios.cost(i, j, order)).fold(f64::INFINITY, f64::min);
            scenarios.prob(j) * best
        })
        .sum()
}

/// Greedy fast forward selection of `k` scenarios. Each step adds the
/// scenario that most lowers [`ffs_objective`] (lowest index on ties); the
/// mass of every dropped scenario then moves to its nearest selected one.
pub fn ffs_select(scenarios: &ScenarioMatrix, k: usize, order: f64) -> Result<Selection> {
    let s = scenarios.len();
    if k == 0 || k > s {
        return Err(Error::Domain(format!("need 1 <= k <= {s} scenarios, got {k}")));
    }
    let p = scenarios.probabilities();
    let cost: Vec<Vec<f64>> = (0..s).into_par_iter().map(|i| (0..s).map(|j| scenarios.cost(i, j, order)).collect()).collect();
    let mut best = vec![f64::INFINITY; s];
    let mut taken = vec![false; s];
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        let score = |u: usize| -> f64 { (0..s).filter(|&j| j != u && !taken[j]).map(|j| p[j] * best[j].min(cost[u][j])).sum() };
        let u = (0..s)
            .filter(|&u| !taken[u])
            .map(|u| (u, score(u)))
            .fold((usize::MAX, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc })
            .0;
        taken[u] = true;
        selected.push(u);
        for j in 0..s {
            best[j] = best[j].min(cost[u][j]);
        }
    }
    let mut prob = vec![0.0; k];
    for j in 0..s {
        let target = (0..k).fold(0, |b, c| if cost[selected[c]][j] < cost[selected[b]][j] { c } else { b });
        let target = selected.iter().position(|&i| i == j).unwrap_or(target);
        prob[target] += p[j];
    }
    Ok(Selection { selected, prob })
}

/// Fan tree of the scenarios chosen by [`ffs_select`].
pub fn ffs_init(scenarios: &ScenarioMatrix, k: usize, order: f64) -> Result<ScenarioTree> {
    let sel = ffs_select(scenarios, k, order)?;
    let rows: Vec<&[f64]> = sel.selected.iter().map(|&i| scenarios.path(i)).collect();
    fan(&rows, &sel.prob, scenarios.depth(), scenarios.dim())
}

/// Layered tree with `branching[t]` children per stage-`t` node, uniform
/// quantizers in `[lo, hi]^dim` and conditional probabilities drawn uniform
/// in `(0, 1]` then normalized per node.
pub fn random_init(branching: &[usize], dim: usize, lo: f64, hi: f64, seed: u64) -> Result<ScenarioTree> {
    if !(lo <= hi) {
        return Err(Error::Domain(format!("empty quantizer range [{lo}, {hi}]")));
    }
    let mut q_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    layered_tree(
        branching,
        dim,
        |q| q.iter_mut().for_each(|x| *x = if lo == hi { lo } else { q_rng.gen_range(lo..=hi) }),
        |b| {
            let raw: Vec<f64> = (0..b).map(|_| 1.0 - p_rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        },
    )
}

/// Merges sibling nodes at stages `1..=stage` whose quantizers are bitwise
/// equal. Probabilities add up and the children of merged nodes are pooled.
pub fn merge_prefixes(tree: &ScenarioTree, stage: usize) -> Result<ScenarioTree> {
    let dim = tree.dim();
    let mut parent = vec![None];
    let mut prob = vec![tree.prob(0)];
    let mut values = tree.quantizer(0).to_vec();
    // Original nodes waiting to be placed, with the new id of their parent.
    let mut frontier: Vec<(usize, usize)> = tree.children(0).iter().map(|&c| (c, 0)).collect();
    let mut depth = 1;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        let mut merged: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
        for (node, new_parent) in frontier {
            let key = (new_parent, tree.quantizer(node).iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            let id = match merged.get(&key) {
                Some(&id) if depth <= stage => {
                    prob[id] += tree.prob(node);
                    id
                }
                _ => {
                    let id = parent.len();
                    parent.push(Some(new_parent));
                    prob.push(tree.prob(node));
                    values.extend_from_slice(tree.quantizer(node));
                    merged.insert(key, id);
                    id
                }
            };
            next.extend(tree.children(node).iter().map(|&c| (c, id)));
        }
        // Keep children of one merged node contiguous.
        next.sort_by_key(|&(_, p)| p);
        frontier = next;
        depth += 1;
    }
    debug_assert_eq!(values.len(), parent.len() * dim);
    ScenarioTree::from_parts(dim, parent, values, prob)
}
