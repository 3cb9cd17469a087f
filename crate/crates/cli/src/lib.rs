//! Driver library behind the `zipper` binary: configuration and the
//! compile, verify, run and sweep commands.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use commands::{
    cmd_compile, cmd_run, cmd_sweep, cmd_verify, CompileArgs, CompileOutput, CompileSummary, RunOutput, SweepCell,
    SweepGrid, VerifyReport, Workload,
};
pub use config::{GraphSource, HardwareSpec, RunConfig, CONFIG_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for verification and internal failures, 2 for usage, 3 for capacity.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Capacity(_) => 3,
            CliError::Verify(_) | CliError::Failed(_) => 1,
        }
    }
}
