use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical breakdown at iteration {iteration}: {reason}")]
    NumericalBreakdown { iteration: usize, reason: String },

    #[error("chain diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    /// Line search could not find any decreasing step. The cost trajectory
    /// up to the failing iteration is attached.
    #[error("line search stagnated at iteration {iteration}")]
    Stagnation { iteration: usize, trajectory: Vec<f64> },

    #[error("incompatible checkpoint: {0}")]
    CheckpointIncompatible(String),

    #[error("malformed tensor file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalBreakdown { .. } | Error::Divergence { .. } | Error::Stagnation { .. }
        )
    }
}
