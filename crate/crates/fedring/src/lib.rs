//! The `fedring` command-line harness: `train`, `attack` and `compare`.

pub mod attack;
pub mod compare;
pub mod config;
pub mod output;
pub mod train;

use fedring_core::engine::EngineError;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("runtime divergence: {0}")]
    Divergence(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 2 for bad input, 3 for a run that blew up, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Protocol { .. } | EngineError::Model(_) => {
                CliError::Config(e.to_string())
            }
            EngineError::Divergence(_) | EngineError::Numeric(_) | EngineError::Csahe(_) => {
                CliError::Divergence(e.to_string())
            }
        }
    }
}

impl From<fedring_core::model::ModelError> for CliError {
    fn from(e: fedring_core::model::ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// `git describe` output when the build recorded one, else `v<crate version>`.
pub const VERSION: &str = match option_env!("FEDRING_GIT_DESCRIBE") {
    Some(d) => d,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};
