//! Simulation-based estimation: minimum distance, simulated minimum distance,
//! approximate Bayesian computation, the reverse sampler, Laplace-type
//! quasi-posteriors and the parametric bootstrap.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod oracles;
pub mod param;
pub mod rng;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
