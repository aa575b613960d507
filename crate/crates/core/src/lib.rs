//! Bayesian quickest change detection with on-off observation control.

pub mod asymptotics;
pub mod bellman;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod policy;
pub mod posterior;
pub mod reference;
pub mod rng;

pub use error::{QcdError, Result};
