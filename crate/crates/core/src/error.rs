use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the pipeline.
///
/// The variants are grouped so that the command-line driver can map them to
/// distinct exit codes (see [`Error::category`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed JSON: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("response is not valid topic JSON ({reason}): {raw}")]
    ResponseFormat { reason: String, raw: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("request timed out after {attempts} attempt(s): {message}")]
    Timeout { attempts: usize, message: String },
    #[error("missing embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("missing recorded response for request {0}")]
    MissingRecording(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric divergence at epoch {epoch}, {stage}")]
    Divergence { epoch: usize, stage: String },
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("stale artifact {path}: {reason}")]
    Stale { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Backend,
    Numeric,
    Staleness,
    Data,
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Config,
            Error::Transport { .. }
            | Error::Timeout { .. }
            | Error::MissingEmbedding(_)
            | Error::MissingRecording(_)
            | Error::ResponseFormat { .. } => ErrorCategory::Backend,
            Error::Divergence { .. } | Error::Numeric(_) | Error::DegenerateVariance(_) => {
                ErrorCategory::Numeric
            }
            Error::Stale { .. } => ErrorCategory::Staleness,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Domain(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorCategory::Data,
        }
    }
}
