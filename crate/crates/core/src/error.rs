use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("dimension mismatch in {matrix}: expected {expected}, got {actual}")]
    DimensionMismatch {
        matrix: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("spectral radius of the matrix is zero; cannot rescale to {target}")]
    ZeroSpectralRadius { target: f64 },

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("could not sample an overlapping trial within {attempts} attempts")]
    TrialSampling { attempts: usize },

    #[error("invalid trial: {0}")]
    InvalidTrial(String),

    #[error("paired t-test needs at least two pairs of equal length (got {a} and {b})")]
    TTestLength { a: usize, b: usize },

    #[error("paired differences have zero variance")]
    ZeroVariance,

    #[error("epsilon index {index} out of range for {n_trials} trials")]
    EpsilonIndex { index: usize, n_trials: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
