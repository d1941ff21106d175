//! Sequential MCMC filtering for state-space models, with exact and
//! ensemble Kalman baselines, a rotating shallow-water model observed by
//! Lagrangian drifters, and the experiment harness used by the `smcmc` CLI.

pub mod drifters;
pub mod error;
pub mod exec;
pub mod harness;
pub mod linear;
pub mod model;
pub mod rng;
pub mod smcmc;
pub mod sw;

pub use error::{Error, Result};
pub use exec::Execution;
