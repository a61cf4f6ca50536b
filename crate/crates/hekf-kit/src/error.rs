use std::path::PathBuf;

/// Errors produced by the estimation toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A physical quantity violated its domain (negative load, zero speed, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration: bad shapes, unknown keys, inconsistent datasets.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical operation failed (singular matrix, non-finite values).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Network training failed (non-finite loss, divergence, empty grid).
    #[error("training failure: {0}")]
    Training(String),

    /// Covariance tuning found no candidate passing the stability checks.
    #[error("tuning failure: {0}")]
    Tuning(String),

    /// Parameter identification failed.
    #[error("identification failure: {0}")]
    Identification(String),

    /// Synthetic maneuver generation failed.
    #[error("generation error for maneuver '{spec}': {reason}")]
    Generation { spec: String, reason: String },

    /// A stage of the evaluation protocol failed.
    #[error("protocol error in stage '{stage}': {reason}")]
    Protocol { stage: String, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("parse error in {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
