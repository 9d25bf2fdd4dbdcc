//! Orchestration behind the `lanebench` binary.

pub mod backend;
pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("nothing to report: {0}")]
    Empty(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Empty(_) => 3,
        }
    }
}

impl From<lanebench_core::dataset::StoreError> for CliError {
    fn from(e: lanebench_core::dataset::StoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}
