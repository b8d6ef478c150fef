//! Error type shared across the crate.

use crate::solver::RunResult;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    SpdViolation(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("iteration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("empty window")]
    EmptyWindow,

    /// An inner solve failed mid-run; the records collected so far are attached.
    #[error("solver aborted at iteration {at}: {source}")]
    SolverAborted {
        at: usize,
        #[source]
        source: Box<Error>,
        partial: Box<RunResult>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
