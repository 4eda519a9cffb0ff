//! Scenario-tree reduction by nested-distance minimization.
//!
//! The reduced tree keeps a fixed structure while its quantizers and
//! probabilities are improved in turns. Each probability update is a set of
//! fixed-support Wasserstein barycenter problems, solved exactly
//! ([`ot::barycenter_lp`]), by averaged marginals ([`mam`]) or by iterative
//! Bregman projections ([`ibp`]).

pub mod benchmark;
pub mod error;
pub mod filtration;
pub mod ibp;
pub mod mam;
pub mod nested;
pub mod ot;
pub mod reduce;
pub mod tree;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use filtration::{ffs_init, kmeans_init, random_init, ScenarioMatrix};
pub use ibp::{ibp_solve, IbpConfig};
pub use mam::{mam_solve, MamConfig};
pub use nested::{nested_distance, CostTable};
pub use ot::{barycenter_lp, BarycenterProblem, BarycenterSolution};
pub use reduce::{reduce_tree, ConditionalPlan, ReductionConfig, ReductionReport, SolverKind, StartPlan};
pub use tree::{generate_random, load, save, ScenarioTree};
