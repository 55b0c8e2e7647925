//! Experiment harness for the TSEB agent: single runs, lambda sweeps over
//! seeds, and long-format plot data.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_plotdata, cmd_run, cmd_sweep, run_cell};
pub use config::{ExperimentConfig, RawConfig};
pub use error::CliError;
