//! Accuracy metric and the linear-Gaussian benchmark driver.

use std::time::Instant;

use log::info;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ensemble::{run_ensemble_filter, EnsembleConfig};
use super::kalman::{kalman_filter, KalmanPath};
use super::model::{InitialRule, LinearModel};
use crate::error::{check_len, Error, Result};
use crate::exec::{map_indexed, thread_count, Execution};
use crate::model::{simulate_trajectory, NoiseCovariance, ObsVector, StateVector, TimeGrid, Trajectory};
use crate::rng::{repeat_rng, seeded, ENSEMBLE_STREAM, PILOT_STREAM, TRUTH_STREAM};
use crate::smcmc::{run_filter, tune_proposal_scale, RwmConfig};

/// Fraction of `|filter − reference|` entries, over every time and
/// coordinate, that are at most `threshold · σ_y`.
pub fn accuracy_metric(
    filter: &[DVector<f64>],
    reference: &[DVector<f64>],
    sigma_y: f64,
    threshold: f64,
) -> Result<f64> {
    check_len("accuracy series length", reference.len(), filter.len())?;
    let tol = threshold * sigma_y;
    let (mut hit, mut total) = (0usize, 0usize);
    for (f, r) in filter.iter().zip(reference) {
        check_len("accuracy state", r.len(), f.len())?;
        hit += f.iter().zip(r.iter()).filter(|(a, b)| (*a - *b).abs() <= tol).count();
        total += f.len();
    }
    if total == 0 {
        return Err(Error::InvalidConfig("accuracy metric over an empty series".into()));
    }
    Ok(hit as f64 / total as f64)
}

/// Element-wise average of several equally shaped mean series.
pub fn average_series(runs: &[Vec<DVector<f64>>]) -> Result<Vec<DVector<f64>>> {
    let first = runs.first().ok_or_else(|| Error::InvalidConfig("no runs to average".into()))?;
    let mut acc: Vec<DVector<f64>> = first.iter().map(|v| DVector::zeros(v.len())).collect();
    for run in runs {
        check_len("repeat series length", acc.len(), run.len())?;
        for (a, v) in acc.iter_mut().zip(run) {
            *a += v;
        }
    }
    let m = runs.len() as f64;
    Ok(acc.into_iter().map(|a| a / m).collect())
}

fn default_q() -> f64 {
    0.33
}

fn default_window() -> (f64, f64) {
    (0.2, 0.3)
}

fn default_pilot() -> usize {
    400
}

fn default_threshold() -> f64 {
    0.5
}

fn default_repeats() -> usize {
    1
}

/// SMCMC settings of a linear benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmcmcSpec {
    pub n: usize,
    pub n_burn: usize,
    /// `M`, independent repeats whose means are averaged.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_q")]
    pub q: f64,
    /// Fixed proposal scale `σ'`; tuned by a pilot run when absent.
    #[serde(default)]
    pub sigma_prime: Option<f64>,
    #[serde(default = "default_window")]
    pub acceptance_window: (f64, f64),
    #[serde(default = "default_pilot")]
    pub pilot_len: usize,
    /// Seed base of the repeats; the benchmark seed when absent.
    #[serde(default)]
    pub repeat_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearBenchConfig {
    /// State dimensions to run; one block of rows per entry.
    pub dims: Vec<usize>,
    pub a: f64,
    pub sigma_z: f64,
    pub sigma_y: f64,
    #[serde(default = "default_repeats")]
    pub r_hat: usize,
    pub steps: usize,
    pub initial: InitialRule,
    #[serde(default)]
    pub seed: u64,
    /// Errors below `threshold · σ_y` count as accurate.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub smcmc: Option<SmcmcSpec>,
    #[serde(default)]
    pub ensembles: Vec<EnsembleConfig>,
}

impl LinearBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::InvalidConfig("benchmark dims must be non-empty and positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("benchmark needs at least one step".into()));
        }
        if let Some(s) = &self.smcmc {
            if s.repeats == 0 {
                return Err(Error::InvalidConfig("SMCMC repeats must be >= 1".into()));
            }
        }
        for e in &self.ensembles {
            if let Some(loc) = &e.localization {
                for &d in &self.dims {
                    loc.validate(d)?;
                }
            }
        }
        Ok(())
    }

    pub fn model(&self, dim: usize) -> Result<LinearModel> {
        LinearModel::scaled_identity(dim, self.a, self.sigma_z, self.sigma_y, self.r_hat)
    }
}

/// One table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub d: usize,
    /// `N_e`, or `N+N_burn` for SMCMC.
    pub size: String,
    pub repeats: usize,
    pub fraction: f64,
    pub seconds: f64,
    pub threads: usize,
}

/// Per-dimension series kept alongside the rows.
#[derive(Clone, Debug)]
pub struct BenchSeries {
    pub d: usize,
    pub truth: Vec<DVector<f64>>,
    pub kf: Vec<DVector<f64>>,
    /// `(method, means for k = 1..=T)`.
    pub methods: Vec<(String, Vec<DVector<f64>>)>,
    pub smcmc_scale: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub rows: Vec<BenchRow>,
    pub series: Vec<BenchSeries>,
}

/// Model, initial state and synthetic trajectory for dimension `d`.
pub fn bench_data(cfg: &LinearBenchConfig, d: usize) -> Result<(LinearModel, StateVector, Trajectory)> {
    let model = cfg.model(d)?;
    let mut truth_rng = seeded(cfg.seed, TRUTH_STREAM);
    let z0 = cfg.initial.draw(d, &mut truth_rng);
    let grid = TimeGrid::uniform(cfg.steps, 1.0, 1)?;
    let tr = simulate_trajectory(&model, &model, &grid, &z0, &mut truth_rng)?;
    Ok((model, z0, tr))
}

/// Isotropic SMCMC kernel; `σ'` is tuned on the first observation when
/// the spec leaves it open.
pub fn smcmc_config(
    cfg: &LinearBenchConfig,
    spec: &SmcmcSpec,
    model: &LinearModel,
    z0: &StateVector,
    y1: &ObsVector,
) -> Result<(RwmConfig, f64)> {
    let d = model.dim();
    let base = NoiseCovariance::isotropic(d, 1.0)?;
    let scale = match spec.sigma_prime {
        Some(s) => s,
        None => {
            let mut rng = seeded(cfg.seed, PILOT_STREAM);
            let guess = 2.38 / (d as f64).sqrt() * cfg.sigma_z.min(cfg.sigma_y);
            let tuned = tune_proposal_scale(
                model,
                model,
                z0,
                y1,
                &base.scaled(guess),
                spec.pilot_len,
                spec.acceptance_window,
                &mut rng,
            )?;
            info!("d={d} SMCMC pilot: σ'={:.3e}, acceptance {:.3}", guess * tuned.scale, tuned.acceptance);
            guess * tuned.scale
        }
    };
    Ok((RwmConfig::new(spec.n, spec.n_burn, base.scaled(scale), spec.q)?, scale))
}

/// Runs KF, the configured ensemble methods and SMCMC on shared synthetic
/// data for each dimension.
pub fn benchmark_run(cfg: &LinearBenchConfig, exec: Execution) -> Result<BenchOutput> {
    cfg.validate()?;
    let threads = if exec.is_parallel() { thread_count() } else { 1 };
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for &d in &cfg.dims {
        let (model, z0, tr) = bench_data(cfg, d)?;

        let start = Instant::now();
        let p0 = DMatrix::identity(d, d) * cfg.sigma_z.powi(2);
        let kf: Vec<DVector<f64>> = kalman_filter(&model, &z0, &p0, &tr.observations, KalmanPath::Auto)?
            .into_iter()
            .map(|b| b.mean)
            .collect();
        rows.push(BenchRow {
            method: "KF".into(),
            d,
            size: "-".into(),
            repeats: 1,
            fraction: 1.0,
            seconds: start.elapsed().as_secs_f64(),
            threads: 1,
        });

        let mut methods = Vec::new();
        for (i, ens) in cfg.ensembles.iter().enumerate() {
            let start = Instant::now();
            let mut rng = seeded(cfg.seed.wrapping_add(i as u64 + 1), ENSEMBLE_STREAM);
            let means = run_ensemble_filter(&model, &z0, &tr.observations, ens, exec, &mut rng)?;
            let seconds = start.elapsed().as_secs_f64();
            let fraction = accuracy_metric(&means, &kf, cfg.sigma_y, cfg.threshold)?;
            info!("d={d} {}: fraction {fraction:.3} in {seconds:.2}s", ens.method.name());
            rows.push(BenchRow {
                method: ens.method.name().into(),
                d,
                size: ens.members.to_string(),
                repeats: 1,
                fraction,
                seconds,
                threads: if ens.method == super::ensemble::EnsembleMethod::Lenkf { threads } else { 1 },
            });
            methods.push((ens.method.name().to_string(), means));
        }

        let mut smcmc_scale = None;
        if let Some(spec) = &cfg.smcmc {
            let start = Instant::now();
            let (rwm, scale) = smcmc_config(cfg, spec, &model, &z0, &tr.observations[0])?;
            smcmc_scale = Some(scale);
            let runs = map_indexed(exec, spec.repeats, |m| {
                let mut rng = repeat_rng(spec.repeat_seed.unwrap_or(cfg.seed), m);
                run_filter(&model, &model, &z0, &tr.observations, &rwm, &mut rng)
                    .map(|steps| steps.into_iter().map(|s| s.mean).collect::<Vec<_>>())
            });
            let runs = collect_repeats(runs)?;
            let means = average_series(&runs)?;
            let seconds = start.elapsed().as_secs_f64();
            let fraction = accuracy_metric(&means, &kf, cfg.sigma_y, cfg.threshold)?;
            info!("d={d} SMCMC: fraction {fraction:.3} in {seconds:.2}s");
            rows.push(BenchRow {
                method: "SMCMC".into(),
                d,
                size: format!("{}+{}", spec.n, spec.n_burn),
                repeats: spec.repeats,
                fraction,
                seconds,
                threads,
            });
            methods.push(("SMCMC".into(), means));
        }
        series.push(BenchSeries {
            d,
            truth: tr.states[1..].to_vec(),
            kf,
            methods,
            smcmc_scale,
        });
    }
    Ok(BenchOutput { rows, series })
}

/// Unwraps per-repeat results, reporting every failure together.
pub fn collect_repeats<T>(runs: Vec<Result<T>>) -> Result<Vec<T>> {
    let total = runs.len();
    let mut ok = Vec::with_capacity(total);
    let mut details = Vec::new();
    for (m, r) in runs.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => details.push(format!("repeat {m}: {e}")),
        }
    }
    if details.is_empty() {
        Ok(ok)
    } else {
        Err(Error::RepeatsFailed {
            failed: details.len(),
            total,
            details: details.join("; "),
        })
    }
}
