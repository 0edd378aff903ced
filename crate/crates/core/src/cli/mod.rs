//! Operator commands: evolve, eval, replay, ablate and report.

pub mod commands;
pub mod config;

use thiserror::Error;

use crate::gateway::GatewayError;
use crate::harness::HarnessError;
use crate::kernel::trace::TraceError;
use crate::kernel::KernelError;
use crate::registry::RegistryError;
use crate::tasks::TaskError;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_evolve, cmd_replay, cmd_report, EvalOutcome, EvolveOutcome,
};
pub use config::{BackendConfig, BudgetConfig, RunConfig, TaskConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("environment variable {0} is not set")]
    MissingKey(String),
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("unknown policy {name:?}; available: {}", available.join(", "))]
    UnknownPolicy {
        name: String,
        available: Vec<String>,
    },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::BackendUnavailable(m) => CliError::Backend(m),
            GatewayError::MissingApiKey(k) => CliError::MissingKey(k),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl CliError {
    /// 2 when a backend could not be reached, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Backend(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
