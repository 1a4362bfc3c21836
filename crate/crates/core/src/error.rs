use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("schema version mismatch: expected {expected:?}, found {found:?}")]
    SchemaVersion { expected: String, found: String },

    #[error("degenerate bandwidth: median pairwise distance is zero")]
    DegenerateBandwidth,

    #[error("matrix is not positive semi-definite within tolerance ({0})")]
    NotPsd(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("selection error: {0}")]
    Selection(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBandwidth
                | Error::NotPsd(_)
                | Error::UndefinedScore(_)
                | Error::Selection(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
