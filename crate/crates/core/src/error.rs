use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid game parameters: {0}")]
    InvalidSpec(String),

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not substochastic: row {row} {reason}")]
    NotSubstochastic { row: usize, reason: String },

    #[error("matrix is singular")]
    Singular,

    #[error("linear solve is ill-conditioned (residual {residual:e})")]
    IllConditioned { residual: f64 },

    #[error("matrix order {order} exceeds the cap of {cap}")]
    TooLarge { order: usize, cap: usize },

    #[error("impulse {step} steps is not admissible at node {node}")]
    InadmissibleImpulse { node: usize, step: isize },

    #[error("domain must contain every nonpositive node; node {0} is missing")]
    DomainMissingNode(usize),

    #[error("solver did not converge after {iterations} iterations (last diff {last_diff:e})")]
    NotConverged { iterations: usize, last_diff: f64 },

    #[error("degenerate game: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
