//! Experiment harness around `roughspde-core`: TOML configs, deterministic
//! parallel Monte Carlo, binary and CSV outputs, manifests, verification
//! suites, and the command line.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod mc;
pub mod parallel;
pub mod plot;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
