use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Backend,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown dataset format `{0}`")]
    UnknownFormat(String),
    #[error("unknown predictor backend `{0}`")]
    UnknownBackend(String),
    #[error("external predictor backend selected but no adapter is registered")]
    NoExternalAdapter,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("conflicting ablation variants: {0}")]
    ConflictingVariants(String),
    #[error("k must be a positive integer")]
    InvalidK,
    #[error("prompt instructions are empty")]
    EmptyInstructions,
    #[error("subsample size {n} is out of range 1..={available}")]
    SubsampleOutOfRange { n: usize, available: usize },

    #[error("{file}: record {index}: {reason}")]
    MalformedRecord {
        file: String,
        index: usize,
        reason: String,
    },
    #[error("split `{0}` is empty")]
    EmptySplit(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("length mismatch: {left} predictions vs {right} references")]
    LengthMismatch { left: usize, right: usize },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("unknown sample id `{0}`")]
    UnknownSample(String),
    #[error("invalid model artifact: {0}")]
    InvalidArtifact(String),

    #[error("embedding provider failed on text {index}: {reason}")]
    Provider { index: usize, reason: String },
    #[error("replay miss for request {0}")]
    ReplayMiss(String),
    #[error("transport error: {0}")]
    Transport(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::UnknownFormat(_)
            | Error::UnknownBackend(_)
            | Error::NoExternalAdapter
            | Error::Config(_)
            | Error::ConflictingVariants(_)
            | Error::InvalidK
            | Error::EmptyInstructions
            | Error::SubsampleOutOfRange { .. } => ErrorKind::Config,
            Error::Provider { .. } | Error::ReplayMiss(_) | Error::Transport(_) => {
                ErrorKind::Backend
            }
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
