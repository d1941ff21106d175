//! Sequential MCMC filter built on an auxiliary-index random-walk
//! Metropolis kernel.

pub mod filter;
pub mod kernel;

pub use filter::{
    estimate, predict_locations, run_filter, run_filter_unknown, run_filter_with, smcmc_filter_step_known,
    smcmc_filter_step_unknown, tune_proposal_scale, FilterStep, FilterTarget, FlowCache, LagrangianDynamics,
    PredictedLocations, RwmConfig, SampleSet, TunedScale,
};
pub use kernel::{
    index_proposal_prob, propose_index, run_chain, rwm_aux_kernel_step, AuxTarget, ChainDiagnostics, ChainState,
    IndexCorrection, Proposal, StepOutcome,
};
