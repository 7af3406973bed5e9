//! Sparse Gaussian graphical models with hidden DAR-driven regime switching.

pub mod data;
pub mod error;
pub mod inference;
pub mod messages;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod sampler;
pub mod simulation;

pub use data::Dataset;
pub use error::{Error, Result};
