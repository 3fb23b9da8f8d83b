//! Command implementations behind the `sparseload` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use commands::{
    cmd_backtest, cmd_fit, cmd_ingest, cmd_pairtest, cmd_report, cmd_run, cmd_synth, FitOptions, RunOutcome,
    SynthKind, SynthOptions,
};
pub use config::RunConfig;
pub use error::{CliError, CliResult, ErrorReport};
