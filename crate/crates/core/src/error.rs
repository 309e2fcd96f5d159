//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by geometry primitives.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid manifold parameters: {0}")]
    InvalidManifold(String),

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {got_rows}x{got_cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("points belong to different manifolds")]
    ManifoldMismatch,

    #[error("tangent vector is not based at the given point")]
    BaseMismatch,

    #[error("point violates the manifold membership invariant (defect {defect:.3e})")]
    NotOnManifold { defect: f64 },

    #[error("vector violates the tangency invariant (defect {defect:.3e})")]
    NotTangent { defect: f64 },

    #[error("no unique geodesic: {0}")]
    CutLocus(String),
}

/// Errors raised by problem definitions and smoothness estimation.
#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("empty batch")]
    EmptyBatch,

    #[error("component index {index} out of range (n = {n})")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid problem data: {0}")]
    InvalidData(String),

    #[error("restricted least-squares system is rank deficient for column {column}")]
    RankDeficient { column: usize },

    #[error(
        "reference solve did not converge within {iters} iterations (best objective {best:.6e})"
    )]
    ConvergenceFailure { iters: u64, best: f64 },
}

/// Errors raised by optimizer runs.
#[derive(Debug, Error)]
pub enum OptimError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error(transparent)]
    Problem(#[from] ProblemError),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite objective {value} at iteration {iteration}")]
    NonFiniteObjective { iteration: u64, value: f64 },
}

/// Errors raised while reading or generating datasets.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}
