//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VoxError {
    /// Caller passed an invalid argument (bad dims, non-monotone ladder, ...).
    #[error("argument error: {0}")]
    Argument(String),
    /// Input violates a domain precondition (label absent, empty mask, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A serialized artifact is malformed.
    #[error("format error: {0}")]
    Format(String),
    /// An operation was invoked before its prerequisite state existed
    /// (untrained codebook/dictionary, missing stage output).
    #[error("state error: {0}")]
    State(String),
    /// Synthetic data generation could not satisfy its constraints.
    #[error("generation error: {0}")]
    Generation(String),
    /// A pipeline stage failed; carries the stage name for diagnostics.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<VoxError>,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl VoxError {
    pub fn argument(msg: impl Into<String>) -> Self {
        VoxError::Argument(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        VoxError::Domain(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        VoxError::Format(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        VoxError::State(msg.into())
    }
    pub fn generation(msg: impl Into<String>) -> Self {
        VoxError::Generation(msg.into())
    }
    pub fn in_stage(self, stage: &str) -> Self {
        VoxError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, VoxError>;
