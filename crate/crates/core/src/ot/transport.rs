//! Transportation simplex: north-west-corner start, MODI pricing, cycle
//! pivots on the basis spanning tree.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

const NONBASIC: usize = usize::MAX;

/// Optimal plan with the dual potentials certifying it:
/// `row[i] + col[j] ≤ cost[i, j]`, with equality on the basis.
#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub cost: f64,
    pub plan: Array2<f64>,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
    pub pivots: usize,
}

/// Exact Wasserstein cost `min ⟨D, π⟩` over couplings of `q` (rows of `D`)
/// and `q2` (columns of `D`), with an optimal vertex plan.
pub fn wasserstein_lp(q: &[f64], q2: &[f64], cost: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    let sol = transport(q, q2, cost)?;
    Ok((sol.cost, sol.plan))
}

fn check_marginal(name: &str, v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Dimension(format!("{name} marginal is empty")));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Domain(format!("{name} marginal has negative or non-finite entries")));
    }
    Ok(v.iter().sum())
}

/// Solves the balanced transport problem between `supply` (rows) and
/// `demand` (columns). The demand is rescaled to the supply's total mass,
/// so both only need to agree up to rounding.
pub fn transport(supply: &[f64], demand: &[f64], cost: ArrayView2<f64>) -> Result<TransportSolution> {
    let (r, s) = (supply.len(), demand.len());
    if cost.dim() != (r, s) {
        return Err(Error::Dimension(format!("cost matrix is {:?}, marginals are {r} x {s}", cost.dim())));
    }
    let total_s = check_marginal("row", supply)?;
    let total_d = check_marginal("column", demand)?;
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Domain("cost matrix has non-finite entries".into()));
    }
    if (total_s - total_d).abs() > 1e-6 * total_s.max(total_d).max(1e-300) {
        return Err(Error::Domain(format!("unbalanced marginals: {total_s} vs {total_d}")));
    }
    let scale = if total_d > 0.0 { total_s / total_d } else { 0.0 };
    let demand: Vec<f64> = demand.iter().map(|d| d * scale).collect();

    let mut tp = Tableau::north_west(supply, &demand, cost);
    tp.optimize()?;
    Ok(tp.finish())
}

struct Tableau<'a> {
    r: usize,
    s: usize,
    cost: ArrayView2<'a, f64>,
    /// Basic cells, `R + S − 1` of them, with their flows.
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// `slot[i * S + j]` is the index into `cells`, or `NONBASIC`.
    slot: Vec<usize>,
    u: Vec<f64>,
    v: Vec<f64>,
    pivots: usize,
}

impl<'a> Tableau<'a> {
    fn north_west(supply: &[f64], demand: &[f64], cost: ArrayView2<'a, f64>) -> Self {
        let (r, s) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut cells = Vec::with_capacity(r + s - 1);
        let mut flow = Vec::with_capacity(r + s - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = if i == r - 1 && j == s - 1 { a[i].max(0.0) } else { a[i].min(b[j]).max(0.0) };
            cells.push((i, j));
            flow.push(x);
            a[i] -= x;
            b[j] -= x;
            if i == r - 1 && j == s - 1 {
                break;
            }
            if i == r - 1 {
                j += 1;
            } else if j == s - 1 || a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut slot = vec![NONBASIC; r * s];
        for (k, &(i, j)) in cells.iter().enumerate() {
            slot[i * s + j] = k;
        }
        Tableau { r, s, cost, cells, flow, slot, u: vec![0.0; r], v: vec![0.0; s], pivots: 0 }
    }

    /// Adjacency of the basis tree. Nodes `0..R` are rows, `R..R+S` columns.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.r + self.s];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.r + j, k));
            adj[self.r + j].push((i, k));
        }
        adj
    }

    fn potentials(&mut self, adj: &[Vec<(usize, usize)>]) {
        let r = self.r;
        let mut seen = vec![false; r + self.s];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.cells[k];
                if next >= r {
                    self.v[j] = self.cost[(i, j)] - self.u[i];
                } else {
                    self.u[i] = self.cost[(i, j)] - self.v[j];
                }
                queue.push_back(next);
            }
        }
    }

    fn optimize(&mut self) -> Result<()> {
        let (r, s) = (self.r, self.s);
        let cmax = self.cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let tol = 1e-11 * cmax.max(1e-300);
        let limit = 1000 + 50 * r * s;
        let mut degenerate = 0usize;
        loop {
            let adj = self.adjacency();
            self.potentials(&adj);
            if r == 1 || s == 1 {
                return Ok(());
            }
            let bland = degenerate > r + s;
            let mut entering = None;
            let mut best = -tol;
            'scan: for i in 0..r {
                for j in 0..s {
                    if self.slot[i * s + j] != NONBASIC {
                        continue;
                    }
                    let d = self.cost[(i, j)] - self.u[i] - self.v[j];
                    if d < best {
                        entering = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                        best = d;
                    }
                }
            }
            let Some((ei, ej)) = entering else { return Ok(()) };
            if self.pivots >= limit {
                return Err(Error::IterationLimit(limit));
            }

            // Tree path from column `ej` to row `ei`, read back from `ei`.
            let mut via = vec![NONBASIC; r + s];
            let mut prev = vec![NONBASIC; r + s];
            let start = r + ej;
            via[start] = usize::MAX - 1;
            let mut queue = VecDeque::from([start]);
            while let Some(node) = queue.pop_front() {
                if node == ei {
                    break;
                }
                for &(next, k) in &adj[node] {
                    if via[next] == NONBASIC {
                        via[next] = k;
                        prev[next] = node;
                        queue.push_back(next);
                    }
                }
            }
            let mut path = Vec::new();
            let mut node = ei;
            while node != start {
                path.push(via[node]);
                node = prev[node];
            }

            // Edges at even positions lose flow.
            let mut leave = NONBASIC;
            let mut theta = f64::INFINITY;
            for &k in path.iter().step_by(2) {
                let f = self.flow[k];
                let idx = self.cells[k].0 * s + self.cells[k].1;
                if f < theta || f == theta && idx < self.cells[leave].0 * s + self.cells[leave].1 {
                    theta = f;
                    leave = k;
                }
            }
            let theta = theta.max(0.0);
            for (pos, &k) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[k] = (self.flow[k] - theta).max(0.0);
                } else {
                    self.flow[k] += theta;
                }
            }
            let (li, lj) = self.cells[leave];
            self.slot[li * s + lj] = NONBASIC;
            self.cells[leave] = (ei, ej);
            self.flow[leave] = theta;
            self.slot[ei * s + ej] = leave;
            self.pivots += 1;
            degenerate = if theta == 0.0 { degenerate + 1 } else { 0 };
        }
    }

    fn finish(self) -> TransportSolution {
        let mut plan = Array2::zeros((self.r, self.s));
        let mut cost = 0.0;
        for (&(i, j), &f) in self.cells.iter().zip(&self.flow) {
            plan[(i, j)] = f;
            cost += f * self.cost[(i, j)];
        }
        TransportSolution { cost, plan, row_potential: self.u, col_potential: self.v, pivots: self.pivots }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn squared(xs: &[f64], ys: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| (xs[i] - ys[j]).powi(2))
    }

    /// All vertices of a 2 x 2 transport polytope are parametrized by one mass.
    fn brute_2x2(q: &[f64], q2: &[f64], d: &Array2<f64>) -> f64 {
        let lo = (q[0] - q2[1]).max(0.0);
        let hi = q[0].min(q2[0]);
        [lo, hi]
            .iter()
            .map(|&t| {
                let plan = [[t, q[0] - t], [q2[0] - t, q[1] - q2[0] + t]];
                (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| plan[i][j] * d[(i, j)]).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn trivial_supports() {
        let (c, p) = wasserstein_lp(&[1.0], &[1.0], array![[0.0]].view()).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(p[(0, 0)], 1.0);
        let (c, _) = wasserstein_lp(&[1.0], &[1.0], squared(&[0.0], &[3.0]).view()).unwrap();
        assert_eq!(c, 9.0);
    }

    #[test]
    fn shifted_pair_matches_enumeration() {
        let (q, q2) = ([0.5, 0.5], [0.5, 0.5]);
        let d = squared(&[0.0, 1.0], &[1.0, 2.0]);
        let oracle = brute_2x2(&q, &q2, &d);
        assert!((oracle - 1.0).abs() < 1e-15);
        let (c, plan) = wasserstein_lp(&q, &q2, d.view()).unwrap();
        assert!((c - oracle).abs() < 1e-12);
        assert!((plan.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn potentials_certify_optimality() {
        let q = [0.1, 0.2, 0.3, 0.4];
        let q2 = [0.25, 0.05, 0.3, 0.2, 0.2];
        let d = squared(&[0.0, 1.0, 2.5, 4.0], &[0.2, 1.1, 1.9, 3.0, 5.0]);
        let sol = transport(&q, &q2, d.view()).unwrap();
        let dual: f64 = q.iter().zip(&sol.row_potential).map(|(a, b)| a * b).sum::<f64>()
            + q2.iter().zip(&sol.col_potential).map(|(a, b)| a * b).sum::<f64>();
        assert!((dual - sol.cost).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..5 {
                assert!(sol.row_potential[i] + sol.col_potential[j] <= d[(i, j)] + 1e-12);
            }
        }
        for (i, &qi) in q.iter().enumerate() {
            assert!((sol.plan.row(i).sum() - qi).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mass_entries_keep_their_column() {
        let d = squared(&[0.0, 1.0], &[0.0, 5.0, 1.0]);
        let (c, plan) = wasserstein_lp(&[0.5, 0.5], &[0.5, 0.0, 0.5], d.view()).unwrap();
        assert!(c.abs() < 1e-12);
        assert_eq!(plan.dim(), (2, 3));
        assert_eq!(plan.column(1).sum(), 0.0);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(wasserstein_lp(&[1.0], &[0.5, 0.5], array![[1.0]].view()), Err(Error::Dimension(_))));
        assert!(matches!(wasserstein_lp(&[1.0], &[0.5], array![[1.0]].view()), Err(Error::Domain(_))));
    }
}
