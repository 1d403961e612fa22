//! Pipeline-level error type with the CLI exit-code mapping.

use vad_core::CoreError;

/// Errors surfaced by the IO / orchestration layer.
///
/// Exit codes: config errors 2, data errors 3, provider errors 4.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("provider error: {0}")]
    Provider(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Provider(_) => 4,
        }
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        PipelineError::Config(msg.to_string())
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        PipelineError::Data(msg.to_string())
    }

    pub fn provider(msg: impl std::fmt::Display) -> Self {
        PipelineError::Provider(msg.to_string())
    }
}

impl From<CoreError> for PipelineError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::FixtureNotFound(_) | CoreError::Provider(_) => {
                PipelineError::Provider(e.to_string())
            }
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<csv::Error> for PipelineError {
    fn from(e: csv::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}
