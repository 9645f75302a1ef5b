use thiserror::Error;

/// Errors produced by the transport solvers and their helpers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("row {0} has zero norm; cosine dissimilarity is undefined")]
    ZeroRow(usize),

    #[error("negative cost {value} at ({row}, {col})")]
    NegativeCost { row: usize, col: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("log-sum-exp over an empty mask")]
    EmptyMask,

    #[error("mask has an all-zero {axis} at index {index}")]
    ZeroRowOrColumn { axis: &'static str, index: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbVec(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("masked transport problem is infeasible: {0}")]
    Infeasible(String),

    #[error("kernel underflow: {0}")]
    NumericalUnderflow(String),

    #[error("solver did not converge")]
    NotConverged,

    #[error("plan violates the marginals (residual {0:e})")]
    InfeasiblePlan(f64),

    #[error("instance too large for the exact reference: {0}")]
    TooLarge(String),

    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
