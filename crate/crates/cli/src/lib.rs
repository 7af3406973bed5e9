//! Batch driver for the regime-switching graphical model: configuration,
//! file formats and the simulate, fit, summarize and metrics stages.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
