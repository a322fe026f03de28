//! Staged driver for the aeroelastic relevance-learning pipeline:
//! `generate-data`, `sample`, `learn` and `report`, with artifacts under
//! `<out>/<config-hash>/<stage>/`.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod stages;

pub use config::Config;
pub use error::{CliError, CliResult};
pub use stages::Context;
