//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad caller input: violated precondition, malformed config, empty text.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A corpus or artifact file failed to parse. Line numbers are 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A pipeline stage was asked to read an artifact that does not exist.
    #[error("missing artifact {path:?}: run the `{stage}` stage first")]
    MissingArtifact { path: String, stage: String },

    /// A persisted model does not match what the current stage expects.
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    TrainDiverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors the caller could have prevented (CLI exit code 1);
    /// false for runtime failures (exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::MissingArtifact { .. }
                | Error::ManifestMismatch(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidInput(msg.into())
    }
}
