//! Command-line front end for FVMD: tracking video sets, scoring them, and the
//! sanity-check and temporal-noise sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod pipeline;
pub mod report;

pub use commands::{run, Cli, Command};
pub use config::{RunConfig, TrackerKind};
pub use error::{exit, CliError};
pub use report::FvmdReport;
