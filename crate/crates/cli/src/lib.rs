//! Command-line pipeline around the `sdiq` library.
//!
//! Subcommands: `simulate`, `track`, `certify`, `extract`, `sweep`,
//! `selftest`. Exit codes: 0 success, 2 usage, 3 data or format,
//! 4 assumption violation (including data inconsistent with the energy
//! bound), 5 solver failure.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod sweep;

pub use commands::{cmd_certify, cmd_extract, cmd_simulate, cmd_track, run_pipeline, PipelineRun};
pub use config::PipelineConfig;
pub use error::{CliError, ExitKind};
pub use sweep::{cmd_sweep, compute_sweep, SweepTable};
