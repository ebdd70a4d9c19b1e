//! Command-line front end: TOML configs in, spectra, trajectories and a
//! reproducibility manifest out.

pub mod config;
pub mod error;
pub mod runner;

pub use config::{parse_config, RunConfig};
pub use error::CliError;
