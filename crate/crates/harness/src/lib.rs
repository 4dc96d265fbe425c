//! Experiment harness: built-in phantoms, scenario drivers, CSV/PGM output
//! and the reference-grid cache behind the `rominv` command.

pub mod cache;
pub mod config;
pub mod error;
pub mod io;
pub mod phantom;
pub mod scenario;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
