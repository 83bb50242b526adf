//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    /// A matrix required to be symmetric is not, within tolerance.
    #[error("matrix not symmetric: max |X - X^T| = {max_asymmetry:.3e} exceeds tolerance {tol:.3e}")]
    NotSymmetric { max_asymmetry: f64, tol: f64 },

    /// A block that must have full column rank does not.
    #[error("rank deficient block: column {column} is numerically dependent on the previous ones")]
    RankDeficient { column: usize },

    /// A matrix required to be positive (semi-)definite is not.
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    /// The Gram matrix of the observation block is numerically singular.
    #[error("singular Gram matrix S^T W S (k = {k})")]
    GramSingular { k: usize },

    /// The quadratic form s^T y along the current action is not positive.
    #[error("solver breakdown: s^T y = {s_dot_y:.3e} <= 0 along the current action")]
    Breakdown { s_dot_y: f64 },

    /// An action or observation column is (numerically) zero.
    #[error("degenerate action: column {index} is zero")]
    DegenerateAction { index: usize },

    /// The residual is already zero; there is nothing left to do.
    #[error("already converged: residual is zero")]
    AlreadyConverged,

    /// A dense materialization was requested above the supported size.
    #[error("operator of dimension {dim} exceeds the dense fallback limit {limit}")]
    TooLargeForDense { dim: usize, limit: usize },

    /// Invalid argument value.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested configuration is not supported.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// The linear system itself is invalid (e.g. b = 0).
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    /// A kernel Gram or GP regression system is too ill-conditioned to factorize.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// Failure reading an input file; `offset` is the byte offset of the offending data.
    #[error("failed to read {path} at byte offset {offset}: {reason}")]
    InputFile {
        path: String,
        offset: u64,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
