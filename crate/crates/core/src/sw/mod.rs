//! Rotating shallow-water forward model and its stochastic forcing.

pub mod fixture;
pub mod grid;
pub mod model;
pub mod noise;
pub mod solver;

pub use fixture::SwFixture;
pub use grid::{GridField, SwGrid};
pub use model::SwModel;
pub use noise::{sample_sine_noise, sine_noise_logdensity, SineNoise, SineNoiseSpec, SupportPolicy};
pub use solver::{
    coriolis_from_latitude, sw_flow, sw_step, BoundaryCondition, BoundaryForcing, BoundaryFrame, EdgeValues,
    Integrator, SwParams, SwSolver, SwState,
};
