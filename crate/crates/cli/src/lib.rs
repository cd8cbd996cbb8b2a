//! Experiment harness: configuration files, runs, sweeps and artifacts.

pub mod config;
pub mod error;
pub mod plot;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, ExperimentKind, RawConfig, TheoremKind};
pub use error::CliError;
pub use run::{Experiment, RunOutcome};
