use thiserror::Error;

/// Errors raised by the tree, transport and reduction routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must agree in shape or dimension do not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A conditional probability was requested with respect to a node of zero mass.
    #[error("node {node} has zero probability; conditional probability undefined")]
    ZeroProbability { node: usize },

    /// The tree structure is malformed (roots, parent links, ids).
    #[error("invalid tree structure at node {node}: {reason}")]
    Structure { node: usize, reason: String },

    /// The tree is structurally sound but violates a probability or stage invariant.
    #[error("tree failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<crate::tree::Violation>),

    /// The entropic kernel exp(-lambda D) under- or overflowed.
    #[error("regularization overflow: lambda * max(D) = {scaled_cost:e} (lambda = {lambda})")]
    RegularizationOverflow { lambda: f64, scaled_cost: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),

    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
