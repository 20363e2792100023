//! Config-driven experiment runner for the CV entanglement witness.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    cmd_baselines, cmd_dataset, cmd_loss_sweep, cmd_report, cmd_train, degrades_gracefully, BaselineReport,
    SweepRow, TrainReport,
};
pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
