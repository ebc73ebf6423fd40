use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector norm {norm:e} is too small to normalize")]
    ZeroNorm { norm: f64 },

    #[error("input is not unit-norm (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("basis is not orthonormal (max |QᵀQ - I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("matrix is rank deficient at column {column}")]
    RankDeficient { column: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown id `{0}`")]
    MissingId(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("scorer variant `{0}` has no trainable parameters")]
    NotTrainable(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("authentication rejected by embedding endpoint (status {status})")]
    Auth { status: u16 },

    #[error("embedding request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error("embedding endpoint error: {0}")]
    Remote(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the caller's inputs rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::ZeroNorm { .. }
                | Error::NotUnitNorm { .. }
                | Error::NonFinite(_)
                | Error::NotOrthonormal { .. }
                | Error::RankDeficient { .. }
                | Error::Parse { .. }
                | Error::DuplicateId(_)
                | Error::MissingId(_)
                | Error::InvalidInput(_)
                | Error::NotTrainable(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
