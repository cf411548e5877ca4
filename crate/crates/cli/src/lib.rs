//! Experiment harness for `hyposde`: TOML run configurations, subcommands
//! and CSV/JSON artifacts.

pub mod config;
pub mod run;

pub use config::{Command, RunConfig};
pub use run::{run, CliError, Manifest};
