use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across ingestion, training, evaluation and the CLI.
#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("dataset has zero rows")]
    ZeroRows,
    #[error("dataset has zero feature columns")]
    ZeroFeatures,
    #[error("feature '{0}' has no observed values")]
    EmptyFeature(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value at step {step} in stage {stage}")]
    NonFinite { step: usize, stage: &'static str },
    #[error("non-finite loss component {0}")]
    NonFiniteLoss(&'static str),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        trajectory: Vec<crate::training::EpochLog>,
    },
    #[error("empty evaluation set")]
    EmptyEvalSet,
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, ImputeError>;

impl ImputeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ImputeError::Io {
            path: path.into(),
            source,
        }
    }
}
