//! Experiment harness for the coupled mean-field particle simulations:
//! TOML configs, the parallel run matrix, CSV/JSON outputs and the CLI
//! subcommands.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod parallel;
pub mod stats;

pub use config::{ExperimentConfig, LawSpec, ModelKind};
pub use error::{AppError, Result};
pub use experiments::{Outcome, RunOptions};
