//! Pipeline orchestration for the benchmark: staged subcommands from
//! structure preparation through metric reporting, each leaving a manifest
//! with content hashes so runs can be checked for staleness and replayed.

pub mod config;
pub mod dataset;
pub mod fixtures;
pub mod manifest;
pub mod models;
pub mod stages;

/// Pipeline errors carrying their process exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Data(_) => 3,
            RunError::Training(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Data(_) => "data",
            RunError::Training(_) => "training",
        }
    }

    /// Single-line machine-parseable form for the diagnostics stream.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.to_string(),
            "kind": self.kind(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

pub type Result<T> = std::result::Result<T, RunError>;

pub fn config_err(msg: impl std::fmt::Display) -> RunError {
    RunError::Config(msg.to_string())
}

pub fn data_err(msg: impl std::fmt::Display) -> RunError {
    RunError::Data(msg.to_string())
}

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
