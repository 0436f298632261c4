use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite weight entry at index {0}")]
    NonFiniteWeights(usize),

    #[error("invalid loss: {0}")]
    InvalidLoss(String),

    #[error("assumption estimation failed at sample {sample}: non-finite intermediate value")]
    EstimationFailure { sample: usize },

    #[error("subproblem assembly failed at sample {sample}: non-finite entries")]
    AssemblyFailure { sample: usize },

    #[error("subproblem dimension {d} exceeds the dense limit of {limit}")]
    TooLarge { d: usize, limit: usize },

    #[error("factorization failed at pivot {pivot}: matrix is not numerically positive definite")]
    NotPositiveDefinite { pivot: usize },

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("schedule overrun: t = {t} exceeds horizon T = {horizon}")]
    ScheduleOverrun { t: usize, horizon: usize },

    #[error("theorem audit unavailable: {0}")]
    AuditUnavailable(String),

    #[error("dataset error at line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
