use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the control stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("replay buffer holds {have} transitions, need {need}")]
    BufferUnderfull { have: usize, need: usize },

    #[error("signal does not oscillate (amplitude {0:e})")]
    NotOscillating(f64),

    #[error("unknown setup `{name}`; valid setups: {valid}")]
    UnknownSetup { name: String, valid: String },

    #[error("missing checkpoint: expected {0}")]
    MissingCheckpoint(PathBuf),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

    /// Coarse category used for CLI exit codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParam(_) | Error::UnknownSetup { .. } => 2,
            Error::MissingCheckpoint(_) | Error::Checkpoint(_) => 3,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 4,
            Error::Divergence(_) | Error::NotOscillating(_) => 5,
            Error::Shape(_) | Error::BufferUnderfull { .. } => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
