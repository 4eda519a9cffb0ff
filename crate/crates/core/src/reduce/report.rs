use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ibp::IbpConfig;
use crate::mam::MamConfig;

/// Barycenter solver used in the probability step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Lp,
    Mam,
    Ibp,
    /// Pick per problem with [`choose_solver`](super::choose_solver).
    Auto,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Lp => "lp",
            SolverKind::Mam => "mam",
            SolverKind::Ibp => "ibp",
            SolverKind::Auto => "auto",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(SolverKind::Lp),
            "mam" => Ok(SolverKind::Mam),
            "ibp" => Ok(SolverKind::Ibp),
            "auto" => Ok(SolverKind::Auto),
            other => Err(Error::Parse(format!("unknown solver '{other}' (expected lp, mam, ibp or auto)"))),
        }
    }
}

/// Transport plan the first quantizer step is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartPlan {
    /// Optimal plan of the nested distance to the starting tree.
    #[default]
    Optimal,
    /// `P(i|m) / |n+|` for every pair, see [`init_plan`](super::init_plan).
    Uniform,
}

#[derive(Clone, Debug)]
pub struct ReductionConfig {
    pub solver: SolverKind,
    /// Stop when `δ(0,0)` improves by no more than this between iterations.
    pub tol: f64,
    /// Order of the nested distance. Only 2 has a closed-form quantizer step.
    pub order: f64,
    pub max_iter: usize,
    pub start: StartPlan,
    pub mam: MamConfig,
    pub ibp: IbpConfig,
    /// `auto` picks MAM above this many measures (when children branch).
    pub n_big: usize,
    /// `auto` picks MAM above this many children per original node.
    pub branch_big: usize,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    pub seed: u64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Lp,
            tol: 0.1,
            order: 2.0,
            max_iter: 50,
            start: StartPlan::Optimal,
            mam: MamConfig::default(),
            ibp: IbpConfig::default(),
            n_big: 10,
            branch_big: 150,
            workers: 0,
            seed: 0,
        }
    }
}

/// One barycenter solve of a probability step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub iteration: usize,
    pub stage: usize,
    /// Reduced-tree node whose children probabilities were solved for.
    pub node: usize,
    pub solver: SolverKind,
    /// Measures with positive weight that entered the solve.
    pub measures: usize,
    /// Largest number of children among those measures.
    pub branching: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub solver: Option<SolverKind>,
    /// `δ(0,0)` of the starting plan with the starting quantizers.
    pub initial_delta: f64,
    /// Nested distance between the original and the starting tree.
    pub initial_nd: f64,
    /// `δ(0,0)` after each outer iteration.
    pub delta_trace: Vec<f64>,
    /// `δ(0,0)^{1/order}` after each outer iteration.
    pub nd_trace: Vec<f64>,
    /// Wall time of each outer iteration.
    pub iteration_seconds: Vec<f64>,
    /// Wall time per stage of each probability step, indexed `[iter][t]`.
    pub stage_seconds: Vec<Vec<f64>>,
    pub solves: Vec<SolveRecord>,
    pub final_nd: f64,
    pub converged: bool,
}

impl ReductionReport {
    pub fn iterations(&self) -> usize {
        self.delta_trace.len()
    }

    /// Number of solves per (stage, solver), sorted by stage then solver.
    pub fn solver_summary(&self) -> Vec<(usize, SolverKind, usize)> {
        let mut counts: Vec<(usize, SolverKind, usize)> = Vec::new();
        for rec in &self.solves {
            match counts.iter_mut().find(|(t, s, _)| *t == rec.stage && *s == rec.solver) {
                Some(entry) => entry.2 += 1,
                None => counts.push((rec.stage, rec.solver, 1)),
            }
        }
        counts.sort_by_key(|&(t, s, _)| (t, s as u8));
        counts
    }
}
