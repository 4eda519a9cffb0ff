//! Method of averaged marginals: Douglas–Rachford splitting between the
//! per-column transport constraints and the consensus on row marginals.
//!
//! The governing sequence `θ^m` is stored column-major (`[s][r]`) so the
//! per-column projections read contiguous memory. Each sweep produces a
//! shadow iterate `x^m = Proj(θ^m + 2(p − p^m)/S^m − D^m/ρ)` that is
//! nonnegative with exact column sums; the stopping test measures how far the
//! shadow plans' row marginals are from agreeing and how far the governing
//! sequence still moves.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ot::{project_into, round_to_marginals, BarycenterProblem, BarycenterSolution, TransportPlanSet};

/// Work per sweep above which measures are updated in parallel.
const PARALLEL_ENTRIES: usize = 1 << 15;

#[derive(Clone, Debug)]
pub struct MamConfig {
    /// Prox parameter. `None` picks [`default_rho`].
    pub rho: Option<f64>,
    /// Stop once the shadow row marginals agree to this sup-norm gap and the
    /// governing sequence moves by no more than this per sweep.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for MamConfig {
    fn default() -> Self {
        Self { rho: None, tolerance: 1e-6, max_iter: 5000 }
    }
}

/// Default prox parameter: `mean(D) · max(1, √S̄ / 2)` with `S̄` the mean
/// number of atoms per measure, or 1 when all costs vanish. Wide measures
/// converge faster with a larger parameter.
pub fn default_rho(problem: &BarycenterProblem) -> f64 {
    let (sum, count) = (0..problem.measures()).fold((0.0, 0usize), |(s, c), m| {
        let d = problem.cost(m);
        (s + d.sum(), c + d.len())
    });
    let mean = sum / count as f64;
    let atoms = problem.total_atoms() as f64 / problem.measures() as f64;
    if mean > 0.0 {
        mean * (atoms.sqrt() / 2.0).max(1.0)
    } else {
        1.0
    }
}

struct Block {
    atoms: usize,
    marginal: Vec<f64>,
    /// `D^m / ρ`, column-major.
    scaled_cost: Vec<f64>,
    theta: Vec<f64>,
    /// Row sums of `theta`.
    rows: Vec<f64>,
    /// Row sums of the last shadow iterate.
    shadow_rows: Vec<f64>,
    /// `p − p^m` used in the last sweep.
    shift: Vec<f64>,
    /// Largest entry change of `theta` in the last sweep.
    movement: f64,
}

/// Iteration state, exposed so callers can drive the sweeps themselves.
pub struct MamState<'a> {
    problem: &'a BarycenterProblem,
    rho: f64,
    average_weights: Vec<f64>,
    blocks: Vec<Block>,
    barycenter: Vec<f64>,
    iterations: usize,
    gap: f64,
    movement: f64,
}

impl<'a> MamState<'a> {
    /// Starts from `warm` plans if given (shape `R × S^m` each), else from the
    /// product plans of the uniform barycenter.
    pub fn new(problem: &'a BarycenterProblem, rho: f64, warm: Option<&[Array2<f64>]>) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("prox parameter must be positive, got {rho}")));
        }
        let r = problem.support();
        if let Some(w) = warm {
            if w.len() != problem.measures() || w.iter().enumerate().any(|(m, p)| p.dim() != problem.cost(m).dim()) {
                return Err(Error::Dimension("warm-start plans do not match the problem".into()));
            }
        }
        let inv: Vec<f64> = (0..problem.measures()).map(|m| 1.0 / problem.marginal(m).len() as f64).collect();
        let inv_total: f64 = inv.iter().sum();
        let average_weights = inv.iter().map(|x| x / inv_total).collect();

        let blocks = (0..problem.measures())
            .map(|m| {
                let q = problem.marginal(m);
                let s_len = q.len();
                let d = problem.cost(m);
                let mut scaled_cost = vec![0.0; s_len * r];
                let mut theta = vec![0.0; s_len * r];
                for s in 0..s_len {
                    for row in 0..r {
                        scaled_cost[s * r + row] = d[(row, s)] / rho;
                        theta[s * r + row] = match warm {
                            Some(w) => w[m][(row, s)],
                            None => q[s] / r as f64,
                        };
                    }
                }
                let mut rows = vec![0.0; r];
                for s in 0..s_len {
                    for row in 0..r {
                        rows[row] += theta[s * r + row];
                    }
                }
                Block {
                    atoms: s_len,
                    marginal: q.to_vec(),
                    scaled_cost,
                    theta,
                    shadow_rows: rows.clone(),
                    rows,
                    shift: vec![0.0; r],
                    movement: f64::INFINITY,
                }
            })
            .collect();
        Ok(Self {
            problem,
            rho,
            average_weights,
            blocks,
            barycenter: vec![1.0 / r as f64; r],
            iterations: 0,
            gap: f64::INFINITY,
            movement: f64::INFINITY,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Marginal disagreement of the latest shadow plans.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    fn average(&self, pick: impl Fn(&Block) -> &[f64]) -> Vec<f64> {
        let r = self.problem.support();
        let mut p = vec![0.0; r];
        for (a, block) in self.average_weights.iter().zip(&self.blocks) {
            for (pr, v) in p.iter_mut().zip(pick(block)) {
                *pr += a * v;
            }
        }
        p
    }

    /// One sweep over all measures. Returns the new gap.
    pub fn step(&mut self) -> f64 {
        let r = self.problem.support();
        let p = self.average(|b| &b.rows);
        let update = |block: &mut Block| {
            let inv_s = 1.0 / block.atoms as f64;
            for row in 0..r {
                block.shift[row] = p[row] - block.rows[row];
            }
            let mut y = vec![0.0; r];
            let mut x = vec![0.0; r];
            let mut scratch = Vec::with_capacity(r);
            block.shadow_rows.fill(0.0);
            block.movement = 0.0;
            for s in 0..block.atoms {
                let col = &mut block.theta[s * r..(s + 1) * r];
                let cost = &block.scaled_cost[s * r..(s + 1) * r];
                for row in 0..r {
                    y[row] = col[row] + 2.0 * block.shift[row] * inv_s - cost[row];
                }
                project_into(&y, block.marginal[s], &mut scratch, &mut x).expect("marginals are nonnegative");
                for row in 0..r {
                    let next = x[row] - block.shift[row] * inv_s;
                    block.movement = block.movement.max((next - col[row]).abs());
                    col[row] = next;
                    block.shadow_rows[row] += x[row];
                }
            }
            for row in 0..r {
                block.rows[row] = block.shadow_rows[row] - block.shift[row];
            }
        };
        if self.problem.total_atoms() * r >= PARALLEL_ENTRIES && self.blocks.len() > 1 {
            self.blocks.par_iter_mut().for_each(update);
        } else {
            self.blocks.iter_mut().for_each(update);
        }
        self.iterations += 1;

        let consensus = self.average(|b| &b.shadow_rows);
        self.gap = self
            .blocks
            .iter()
            .flat_map(|b| b.shadow_rows.iter().zip(&consensus).map(|(a, c)| (a - c).abs()))
            .fold(0.0, f64::max);
        self.barycenter = consensus;
        self.movement = self.blocks.iter().map(|b| b.movement).fold(0.0, f64::max);
        self.gap
    }

    /// Largest change of the governing sequence in the last sweep. It vanishes
    /// exactly at fixed points, where the shadow plans are optimal.
    pub fn movement(&self) -> f64 {
        self.movement
    }

    /// Shadow plans of the last sweep, `R × S^m`.
    pub fn plans(&self) -> Vec<Array2<f64>> {
        let r = self.problem.support();
        self.blocks
            .iter()
            .map(|b| {
                let inv_s = 1.0 / b.atoms as f64;
                Array2::from_shape_fn((r, b.atoms), |(row, s)| (b.theta[s * r + row] + b.shift[row] * inv_s).max(0.0))
            })
            .collect()
    }

    /// Final plans, rounded onto the exact marginals `(p, q^m)` with `p` the
    /// renormalized consensus of the last sweep.
    pub fn into_solution(self, converged: bool) -> BarycenterSolution {
        let total: f64 = self.barycenter.iter().map(|x| x.max(0.0)).sum();
        let barycenter: Vec<f64> = self.barycenter.iter().map(|x| x.max(0.0) / total).collect();
        let mut plans = self.plans();
        for (m, plan) in plans.iter_mut().enumerate() {
            round_to_marginals(plan, &barycenter, self.problem.marginal(m));
        }
        BarycenterSolution {
            objective: self.problem.objective(&plans),
            plans: TransportPlanSet { plans, barycenter },
            iterations: self.iterations,
            converged,
        }
    }
}

/// Solves the barycenter problem by averaged marginals, optionally warm
/// started from earlier plans. Hitting `max_iter` is not an error: the last
/// iterate is returned with `converged = false`.
pub fn mam_solve(problem: &BarycenterProblem, config: &MamConfig, warm: Option<&[Array2<f64>]>) -> Result<BarycenterSolution> {
    let r = problem.support();
    if r == 1 {
        let plans = problem.product_plans(&[1.0]);
        return Ok(BarycenterSolution {
            objective: problem.objective(&plans),
            plans: TransportPlanSet { plans, barycenter: vec![1.0] },
            iterations: 0,
            converged: true,
        });
    }
    let rho = config.rho.unwrap_or_else(|| default_rho(problem));
    let mut state = MamState::new(problem, rho, warm)?;
    let mut converged = false;
    while state.iterations() < config.max_iter {
        if state.step() <= config.tolerance && state.movement() <= config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(state.into_solution(converged))
}
