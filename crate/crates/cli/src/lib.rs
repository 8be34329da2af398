//! File formats, configuration, and command implementations behind the
//! `lpntk` binary. Everything numeric lives in `lpntk-core`; this crate
//! adds IO, binary formats, config plumbing, and a threaded kernel
//! builder.

pub mod commands;
pub mod config;
pub mod formats;
pub mod idx;
pub mod manifest;
pub mod parallel;

use std::process::ExitCode;

/// Failures split by exit code: bad configuration or inputs leave with
/// status 2, failures during otherwise valid work with status 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> CliError {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> CliError {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

/// Core errors surface as runtime failures unless a command decides the
/// input itself was at fault.
impl From<lpntk_core::Error> for CliError {
    fn from(e: lpntk_core::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
