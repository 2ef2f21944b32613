//! Frequency-aware face-forgery detection toolkit.

pub mod data;
pub mod error;
pub mod freq;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod plot;
pub mod train;

pub use error::{Error, Result};
