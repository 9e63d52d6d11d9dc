//! Global tracking transformer at desk scale.

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod head;
pub mod io;
pub mod metrics;
pub mod sim;
pub mod tracker;
pub mod train;

pub use error::{Error, Result};
