//! Command-line driver: layout requests, generation from scratch, placement
//! into a trained scene, rendering, ablations and layout validation.
//!
//! Exit codes: 0 success, 2 bad input, 3 layout service failure, 4 runtime
//! failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablate;
pub mod app;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod scenario;

pub use ablate::{ablation_rows, run_ablation, AblationRow, AblationSwitches};
pub use app::{run, Cli};
pub use config::{ConfigFile, LayoutSource, OracleSpec, Overrides, RunConfig};

use boxfield_core::layout::LlmError;
use boxfield_core::optimize::OptimizeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    External(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::External(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Config(_) | OptimizeError::Layout(_) | OptimizeError::AlreadyFrozen => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::External(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}
