use thiserror::Error;

/// Errors raised across the texture and identification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("dimension {dim} exceeds the configured maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("ket is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("trace is not one (got {0})")]
    InvalidTrace(f64),

    #[error("Bloch vector outside the unit ball (|v|² = {0})")]
    InvalidBloch(f64),

    #[error("invalid ensemble weights: {0}")]
    InvalidWeights(String),

    #[error("channel is not texture-free: {0}")]
    NotFree(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("inconsistent statistics: {0}")]
    Inconsistent(String),

    #[error("disambiguation failed: {0}")]
    Disambiguation(String),

    #[error("pairing failed: {0}")]
    Pairing(String),

    #[error("track {track}: no gate in {{I, H, T, S}} matches (best distance {distance:.3e})")]
    NoGateMatch { track: usize, distance: f64 },

    #[error("quadrature did not converge (last change {0:.3e})")]
    NonConvergence(f64),

    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("thread pool: {0}")]
    ThreadPool(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn mismatch(expected: impl std::fmt::Display, got: impl std::fmt::Display) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
