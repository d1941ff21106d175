//! Linear-Gaussian benchmark models, the exact Kalman filter and the
//! ensemble baselines.

pub mod bench;
pub mod ensemble;
pub mod kalman;
pub mod model;

pub use bench::{
    accuracy_metric, average_series, bench_data, benchmark_run, collect_repeats, smcmc_config, BenchOutput, BenchRow, BenchSeries, LinearBenchConfig,
    SmcmcSpec,
};
pub use ensemble::{
    draw_perturbations, enkf_analysis, enkf_step, estkf_step, etkf_step, forecast, lenkf_analysis, lenkf_step, run_ensemble_filter, EnkfSolver,
    Ensemble, EnsembleConfig, EnsembleMethod, LocalizationSpec, Taper,
};
pub use kalman::{kalman_filter, GaussianBelief, KalmanPath};
pub use model::{InitialRule, LinearModel, ObservationSelector, TransitionMatrix};
