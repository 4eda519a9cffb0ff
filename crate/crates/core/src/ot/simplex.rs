//! Dense revised simplex for `min cᵀx  s.t.  Ax = b, x ≥ 0`.
//!
//! The constraint matrix is stored column-sparse; the basis inverse is kept
//! dense and updated by elementary row operations, with a periodic
//! refactorization. Pricing is Dantzig's rule with lowest-index tie breaking;
//! after a run of degenerate pivots the solver switches to Bland's rule until
//! the objective moves again, which rules out cycling.

use crate::error::{Error, Result};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    rows: usize,
    columns: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Simplex multipliers `y` with `Aᵀy ≤ c` at the optimum, one per row.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(rows: usize) -> Self {
        Self { rows, columns: Vec::new(), cost: Vec::new(), rhs: vec![0.0; rows] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    /// Adds a variable with objective coefficient `cost` and the given
    /// `(row, value)` entries. Returns its index.
    pub fn add_column(&mut self, cost: f64, entries: Vec<(usize, f64)>) -> usize {
        debug_assert!(entries.iter().all(|&(r, _)| r < self.rows));
        self.columns.push(entries);
        self.cost.push(cost);
        self.columns.len() - 1
    }

    pub fn set_rhs(&mut self, row: usize, value: f64) {
        self.rhs[row] = value;
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Simplex::new(self).run()
    }
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    sign: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.rows;
        let n = lp.columns.len();
        let sign: Vec<f64> = lp.rhs.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let b: Vec<f64> = lp.rhs.iter().zip(&sign).map(|(v, s)| v * s).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut is_basic = vec![false; n + m];
        is_basic[n..].iter_mut().for_each(|x| *x = true);
        Simplex {
            lp,
            m,
            n,
            sign,
            xb: b.clone(),
            b,
            basis: (n..n + m).collect(),
            is_basic,
            binv,
            pivots: 0,
            since_refactor: 0,
        }
    }

    /// Column `j` in the sign-normalized system; artificials are unit columns.
    fn column(&self, j: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if j < self.n {
            out.extend(self.lp.columns[j].iter().map(|&(r, v)| (r, v * self.sign[r])));
        } else {
            out.push((j - self.n, 1.0));
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        let (m, n) = (self.m, self.n);
        let limit = 50 * (m + n) + 10_000;

        // Phase I: minimize the sum of artificials.
        let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
        self.optimize(&phase1, n + m, limit)?;
        let infeas: f64 = self.basis.iter().zip(&self.xb).filter(|(&j, _)| j >= n).map(|(_, &x)| x.max(0.0)).sum();
        let scale = 1.0 + self.b.iter().map(|v| v.abs()).sum::<f64>();
        if infeas > FEAS_TOL * scale {
            return Err(Error::Infeasible);
        }
        self.drive_out_artificials();

        // Phase II: artificials may not re-enter.
        let mut phase2 = self.lp.cost.clone();
        phase2.extend(std::iter::repeat(0.0).take(m));
        self.optimize(&phase2, n, limit)?;

        let mut x = vec![0.0; n];
        for (i, &j) in self.basis.iter().enumerate() {
            if j < n {
                x[j] = self.xb[i].max(0.0);
            }
        }
        let objective = x.iter().zip(&self.lp.cost).map(|(a, c)| a * c).sum();
        let y = self.multipliers(&phase2);
        let duals = y.iter().zip(&self.sign).map(|(v, s)| v * s).collect();
        Ok(LpSolution { x, objective, duals, pivots: self.pivots })
    }

    fn multipliers(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                y.iter_mut().zip(row).for_each(|(yk, &bk)| *yk += cb * bk);
            }
        }
        y
    }

    /// Runs simplex pivots with `cost`; only variables `< allowed` may enter.
    fn optimize(&mut self, cost: &[f64], allowed: usize, limit: usize) -> Result<()> {
        let m = self.m;
        let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let opt_tol = FEAS_TOL * cmax.max(1.0);
        let mut col = Vec::new();
        let mut alpha = vec![0.0; m];
        let mut degenerate = 0usize;
        loop {
            if self.pivots > limit {
                return Err(Error::IterationLimit(limit));
            }
            let y = self.multipliers(cost);
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = -opt_tol;
            for j in 0..allowed {
                if self.is_basic[j] {
                    continue;
                }
                self.column(j, &mut col);
                let d = cost[j] - col.iter().map(|&(r, v)| y[r] * v).sum::<f64>();
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(j) = entering else { return Ok(()) };

            self.column(j, &mut col);
            for (i, a) in alpha.iter_mut().enumerate() {
                let row = &self.binv[i * m..(i + 1) * m];
                *a = col.iter().map(|&(r, v)| row[r] * v).sum();
            }
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..m {
                if alpha[i] > PIVOT_TOL {
                    let r = self.xb[i].max(0.0) / alpha[i];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            let tie = (r - ratio).abs() <= 1e-12 * ratio.max(1.0);
                            if tie {
                                self.basis[i] < self.basis[l]
                            } else {
                                r < ratio
                            }
                        }
                    };
                    if better {
                        ratio = r;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else { return Err(Error::Unbounded) };
            if ratio <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, j, &alpha);
        }
    }

    fn pivot(&mut self, r: usize, j: usize, alpha: &[f64]) {
        let m = self.m;
        let theta = self.xb[r].max(0.0) / alpha[r];
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[r] = theta;

        let inv = 1.0 / alpha[r];
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        prow.iter_mut().for_each(|v| *v *= inv);
        for (i, row) in head.chunks_exact_mut(m).chain(tail.chunks_exact_mut(m)).enumerate() {
            let i = if i < r { i } else { i + 1 };
            let f = alpha[i];
            if f != 0.0 {
                row.iter_mut().zip(prow.iter()).for_each(|(a, &p)| *a -= f * p);
            }
        }

        self.is_basic[self.basis[r]] = false;
        self.is_basic[j] = true;
        self.basis[r] = j;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Recomputes the basis inverse and basic values from scratch.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let m = self.m;
        let mut a = vec![0.0; m * m];
        let mut col = Vec::new();
        for (k, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for &(r, v) in &col {
                a[r * m + k] = v;
            }
        }
        let Some(inv) = invert(&mut a, m) else { return };
        self.binv = inv;
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.binv[i * m + k] * self.b[k]).sum();
        }
    }

    /// Pivots basic artificials at zero level out of the basis where possible.
    /// Rows where no structural column has a nonzero entry are redundant and
    /// keep their artificial.
    fn drive_out_artificials(&mut self) {
        let (m, n) = (self.m, self.n);
        let mut col = Vec::new();
        let mut alpha = vec![0.0; m];
        for r in 0..m {
            if self.basis[r] < n {
                continue;
            }
            let mut chosen = None;
            for j in 0..n {
                if self.is_basic[j] {
                    continue;
                }
                self.column(j, &mut col);
                let row = &self.binv[r * m..(r + 1) * m];
                let a: f64 = col.iter().map(|&(k, v)| row[k] * v).sum();
                if a.abs() > PIVOT_TOL {
                    chosen = Some(j);
                    break;
                }
            }
            if let Some(j) = chosen {
                self.column(j, &mut col);
                for (i, a) in alpha.iter_mut().enumerate() {
                    let row = &self.binv[i * m..(i + 1) * m];
                    *a = col.iter().map(|&(k, v)| row[k] * v).sum();
                }
                self.xb[r] = 0.0;
                self.pivot(r, j, &alpha);
            }
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting; `a` is consumed.
fn invert(a: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-13 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(p * m + k, c * m + k);
                inv.swap(p * m + k, c * m + k);
            }
        }
        let d = 1.0 / a[c * m + c];
        for k in 0..m {
            a[c * m + k] *= d;
            inv[c * m + k] *= d;
        }
        for i in 0..m {
            if i != c {
                let f = a[i * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[c * m + k];
                        inv[i * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
    }
    Some(inv)
}
