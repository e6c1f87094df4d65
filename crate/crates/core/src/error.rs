use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row} (column `{column}`): {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },

    #[error("design has no feature columns left")]
    EmptyDesign,

    #[error("design matrix has rank 0")]
    RankZero,

    #[error("dataset must have at least {required} rows, got {actual}")]
    TooFewRows { required: usize, actual: usize },

    #[error("unknown target `{0}`")]
    UnknownTarget(String),

    #[error("unknown group label `{0}`")]
    UnknownGroup(String),

    #[error("operation requires an orthonormalized design")]
    NotOrthonormal,

    #[error("kappa {kappa} out of range 1..={n}")]
    KappaOutOfRange { kappa: usize, n: usize },

    #[error("invalid kappa `{0}`")]
    InvalidKappa(String),

    #[error("non-finite score at row {0}")]
    NonFiniteScore(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("prediction vector for target `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("combining weights must be nonnegative with positive sum")]
    InvalidAlpha,

    #[error("empty sample")]
    EmptySample,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle precondition failed: {0}")]
    OraclePrecondition(String),

    #[error("incomplete reports: {0}")]
    IncompleteReports(String),

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_phase(self, phase: &'static str) -> Error {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
