use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] unidim::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage:?} has not completed for {unit}; run `unidim {stage}` first")]
    MissingStage { stage: &'static str, unit: String },

    #[error("hash mismatch: {path} no longer matches the output recorded by stage {stage:?}; rerun `unidim {stage}`")]
    HashMismatch { stage: &'static str, path: PathBuf },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to start the worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 3 for numerical failures, 2 for everything the user can fix in the inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
