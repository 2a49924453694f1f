use std::path::PathBuf;

use thiserror::Error;

use crate::qp::QpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("infeasible initialization: {0}")]
    InfeasibleInitialization(String),

    /// The data-corrected subproblem has no feasible point. `certificate`
    /// holds the dual ray reported by the solver, if one was found.
    #[error("quadratic subproblem is {status:?} at iteration {iteration}")]
    QpInfeasible {
        iteration: u64,
        status: QpStatus,
        certificate: Option<Vec<f64>>,
    },

    #[error("config hash mismatch: expected {expected}, found {found} in {path}")]
    HashMismatch {
        expected: String,
        found: String,
        path: PathBuf,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
