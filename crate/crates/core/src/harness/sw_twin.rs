//! Shallow-water twin experiments with drifter observations.

use log::{info, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{DrifterLayout, ExperimentKind, SwExperimentConfig, SyntheticScenario};
use crate::drifters::{read_drifter_csv, DrifterObservation, DrifterRecord, Position};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linear::bench::collect_repeats;
use crate::model::{Dynamics, NoiseCovariance, ObsVector, ObservationModel, StateVector, TimeGrid};
use crate::rng::{repeat_rng, seeded, SimRng, PILOT_STREAM, REFERENCE_STREAM, TRUTH_STREAM};
use crate::smcmc::{run_filter, run_filter_unknown, tune_proposal_scale, FilterStep, LagrangianDynamics, RwmConfig, TunedScale};
use crate::sw::{
    coriolis_from_latitude, BoundaryCondition, BoundaryForcing, SwFixture, SwGrid, SwModel, SwParams, SwSolver, SwState,
};

/// Model, known initial state and drifter launch positions.
#[derive(Clone, Debug)]
pub struct SwSetup {
    pub model: SwModel,
    pub grid: SwGrid,
    pub z0: StateVector,
    pub x0: Vec<Position>,
}

fn domain_centre(grid: &SwGrid) -> Position {
    Position::new(0.5 * (grid.x(0) + grid.x(grid.nx - 1)), 0.5 * (grid.y(0) + grid.y(grid.ny - 1)))
}

/// Gaussian eddy `ζ = h exp(−r²/2R²)` in geostrophic balance
/// `f u = −g ∂ζ/∂y`, `f v = g ∂ζ/∂x` over flat bathymetry.
pub fn synthetic_eddy(s: &SyntheticScenario) -> Result<(SwGrid, SwParams, StateVector)> {
    let grid = SwGrid::uniform(s.nx, s.ny, s.delta)?;
    let (f0, beta) = coriolis_from_latitude(s.latitude);
    let c = domain_centre(&grid);
    let params = SwParams {
        g: crate::sw::solver::GRAVITY,
        f0,
        beta,
        y0: c.y,
        bathymetry: vec![s.depth; grid.cells()],
    };
    let r2 = (s.eddy_radius * s.delta).powi(2);
    let n = grid.cells();
    let mut z = DVector::zeros(3 * n);
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let (dx, dy) = (grid.x(i) - c.x, grid.y(j) - c.y);
            let zeta = s.eddy_height * (-(dx * dx + dy * dy) / (2.0 * r2)).exp();
            let f = params.coriolis(grid.y(j));
            let idx = grid.flat(i, j);
            z[idx] = s.depth + zeta;
            z[n + idx] = params.g / f * zeta * dy / r2;
            z[2 * n + idx] = -params.g / f * zeta * dx / r2;
        }
    }
    Ok((grid, params, z))
}

fn launch_positions(layout: &DrifterLayout, grid: &SwGrid) -> Vec<Position> {
    match layout {
        DrifterLayout::Explicit { positions } => positions.clone(),
        DrifterLayout::Ring { count, radius_cells } => {
            let c = domain_centre(grid);
            (0..*count)
                .map(|d| {
                    let a = std::f64::consts::TAU * d as f64 / *count as f64;
                    Position::new(c.x + radius_cells * grid.dx() * a.cos(), c.y + radius_cells * grid.dy() * a.sin())
                })
                .collect()
        }
    }
}

pub fn build_setup(cfg: &SwExperimentConfig) -> Result<SwSetup> {
    let (grid, params, z0, forcing) = match (&cfg.fixture, &cfg.synthetic) {
        (Some(path), _) => {
            let fx = SwFixture::load(path)?;
            (fx.grid, fx.params, fx.z0, fx.forcing)
        }
        (None, Some(s)) => {
            let (grid, params, z0) = synthetic_eddy(s)?;
            let forcing = BoundaryForcing::constant_from_state(&grid, &z0)?;
            (grid, params, z0, forcing)
        }
        (None, None) => return Err(Error::InvalidConfig("either fixture or synthetic must be given".into())),
    };
    SwState::from_vector(&grid, &z0)?;
    let times = TimeGrid::uniform(cfg.n_obs, cfg.tau * cfg.inner_steps as f64, cfg.inner_steps)?;
    let solver = SwSolver::new(grid, params, BoundaryCondition::Dirichlet(forcing), cfg.integrator)?;
    let model = SwModel::new(solver, times, cfg.noise.build(grid.nx, grid.ny)?)?.with_sampling(cfg.sampling);
    let x0 = launch_positions(&cfg.drifters, &grid);
    Ok(SwSetup { model, grid, z0, x0 })
}

/// Observations with the drifter tracks behind them and, for synthetic
/// data, the hidden signal.
#[derive(Clone, Debug)]
pub struct TwinData {
    /// `Z_0..Z_n` when the data is synthetic.
    pub truth: Option<Vec<StateVector>>,
    /// Drifter positions at `k = 0..=n`.
    pub tracks: Vec<Vec<Position>>,
    pub observations: Vec<ObsVector>,
}

/// Simulates truth, drifter tracks (advected with the truth's inner
/// velocities) and noisy `(u, v)` observations at the nearest nodes.
pub fn generate_twin(setup: &SwSetup, obs: &DrifterObservation, rng: &mut SimRng) -> Result<TwinData> {
    let n = setup.model.times().n_obs();
    let mut truth = vec![setup.z0.clone()];
    let mut tracks = vec![setup.x0.clone()];
    let mut observations = Vec::with_capacity(n);
    for k in 1..=n {
        let mut pos = tracks[k - 1].clone();
        let mut z = setup.model.advect_with_flow(&truth[k - 1], k, &mut pos)?;
        setup.model.noise().perturb(&mut z, rng);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::FlowBlowUp { k });
        }
        observations.push(obs.observe(&z, k, Some(&pos), rng)?);
        truth.push(z);
        tracks.push(pos);
    }
    Ok(TwinData {
        truth: Some(truth),
        tracks,
        observations,
    })
}

/// Real drifter records matched to the observation times (within 1% of
/// the observation interval); every drifter must report at every time.
pub fn load_drifter_data(records: &[DrifterRecord], times: &TimeGrid) -> Result<TwinData> {
    let mut ids: Vec<u32> = records.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let tol = 0.01 * times.tau(1) * times.inner_steps() as f64;
    let mut tracks = Vec::with_capacity(times.n_obs() + 1);
    let mut observations = Vec::with_capacity(times.n_obs());
    for k in 0..=times.n_obs() {
        let t = times.time(k);
        let mut pos = Vec::with_capacity(ids.len());
        let mut y = Vec::with_capacity(2 * ids.len());
        for id in &ids {
            let r = records
                .iter()
                .find(|r| r.id == *id && (r.t - t).abs() <= tol)
                .ok_or_else(|| Error::InvalidConfig(format!("drifter {id} has no record at t = {t}")))?;
            pos.push(Position::new(r.x, r.y));
            y.extend([r.u_obs, r.v_obs]);
        }
        if k > 0 {
            observations.push(ObsVector::new(k, DVector::from_vec(y)));
        }
        tracks.push(pos);
    }
    Ok(TwinData {
        truth: None,
        tracks,
        observations,
    })
}

/// Average of `K` noise-driven free runs from `z0`. With `antithetic`,
/// runs come in pairs driven by `W` and `−W`.
pub fn compare_prior_reference(
    model: &SwModel,
    z0: &StateVector,
    runs: usize,
    seed: u64,
    antithetic: bool,
    exec: Execution,
) -> Result<Vec<StateVector>> {
    if runs < 2 || (antithetic && runs % 2 == 1) {
        return Err(Error::InvalidConfig(format!(
            "prior reference needs K >= 2 runs (even when antithetic), got {runs}"
        )));
    }
    let n = model.times().n_obs();
    let results = map_indexed(exec, runs, |r| -> Result<Vec<StateVector>> {
        let (base, sign) = if antithetic { (r / 2, if r % 2 == 0 { 1.0 } else { -1.0 }) } else { (r, 1.0) };
        let mut rng = seeded(seed.wrapping_add(base as u64), REFERENCE_STREAM);
        let mut path = vec![z0.clone()];
        for k in 1..=n {
            let z = model.flow(&path[k - 1], k)? + model.noise().sample(&mut rng) * sign;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::FlowBlowUp { k });
            }
            path.push(z);
        }
        Ok(path)
    });
    let paths = collect_repeats(results)?;
    let mut mean = vec![DVector::zeros(z0.len()); n + 1];
    for p in &paths {
        for (m, z) in mean.iter_mut().zip(p) {
            *m += z;
        }
    }
    Ok(mean.into_iter().map(|m| m / runs as f64).collect())
}

/// Deterministic run `z_k = Φ(z_{k−1})`.
pub fn free_run(model: &SwModel, z0: &StateVector) -> Result<Vec<StateVector>> {
    let mut path = vec![z0.clone()];
    for k in 1..=model.times().n_obs() {
        let z = model.flow(&path[k - 1], k)?;
        path.push(z);
    }
    Ok(path)
}

/// Root-mean-square error per field `(η, u, v)` over `k = 1..`.
pub fn field_rmse(a: &[StateVector], b: &[StateVector], cells: usize) -> [f64; 3] {
    let mut acc = [0.0; 3];
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b).skip(1) {
        for (f, slot) in acc.iter_mut().enumerate() {
            *slot += (x.rows(f * cells, cells) - y.rows(f * cells, cells)).norm_squared();
        }
        count += cells;
    }
    acc.map(|s| (s / count.max(1) as f64).sqrt())
}

/// RMS distance in cell units between two sets of tracks over `k = 1..`.
pub fn track_rms_cells(a: &[Vec<Position>], b: &[Vec<Position>], grid: &SwGrid) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for (pa, pb) in a.iter().zip(b).skip(1) {
        for (p, q) in pa.iter().zip(pb) {
            acc += ((p.x - q.x) / grid.dx()).powi(2) + ((p.y - q.y) / grid.dy()).powi(2);
            count += 1;
        }
    }
    (acc / count.max(1) as f64).sqrt()
}

/// Filter output of one repeat.
#[derive(Clone, Debug)]
pub struct RepeatOutput {
    pub steps: Vec<FilterStep>,
}

/// Everything computed by a shallow-water experiment.
#[derive(Clone, Debug)]
pub struct SwOutcome {
    pub setup: SwSetup,
    pub data: TwinData,
    pub tuned: Option<TunedScale>,
    pub sigma_prime: f64,
    pub repeats: Vec<RepeatOutput>,
    /// Filter mean averaged over repeats, `k = 0..=n` (`k = 0` is `z0`).
    pub mean: Vec<StateVector>,
    /// Averaged predicted positions `x̄_k`, `k = 0..=n` (unknown mode).
    pub predicted_tracks: Option<Vec<Vec<Position>>>,
    pub free_run: Vec<StateVector>,
    pub prior_reference: Option<Vec<StateVector>>,
}

/// Deterministic numeric summary written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwSummary {
    pub experiment: String,
    pub seed: u64,
    pub repeats: usize,
    pub dim: usize,
    pub n_obs: usize,
    pub drifters: usize,
    pub sigma_prime: f64,
    pub mean_acceptance: f64,
    /// Fraction of `|filter − reference|` within `threshold · σ̄_y` over
    /// `d × (n + 1)` entries.
    pub fraction_within: f64,
    /// `truth` for synthetic known-location runs, `prior-reference` otherwise.
    pub reference: String,
    /// RMSE of the filter mean against the hidden signal per `(η, u, v)`.
    pub filter_rmse: Option<[f64; 3]>,
    /// RMSE of the deterministic free run against the hidden signal.
    pub free_run_rmse: Option<[f64; 3]>,
    /// RMS distance (cells) between averaged `x̄` and the true tracks.
    pub track_rms_cells: Option<f64>,
}

fn observation_model(setup: &SwSetup, cfg: &SwExperimentConfig, tracks: Option<Vec<Vec<Position>>>) -> Result<DrifterObservation> {
    DrifterObservation::new(setup.grid, cfg.sigma_y.clone(), setup.x0.len(), tracks)
}

/// Pilot run of the first step for the proposal scale `σ'`, starting from
/// the signal noise scale.
fn tune_sigma_prime(setup: &SwSetup, cfg: &SwExperimentConfig, obs: &DrifterObservation, y1: &ObsVector, seed: u64) -> Result<TunedScale> {
    let base = NoiseCovariance::SineModes(cfg.proposal_noise(cfg.noise.sigma).build(setup.grid.nx, setup.grid.ny)?);
    let mut rng = seeded(seed, PILOT_STREAM);
    let t = tune_proposal_scale(
        &setup.model,
        obs,
        &setup.z0,
        y1,
        &base,
        cfg.proposal.pilot_len,
        cfg.proposal.acceptance_window,
        &mut rng,
    )?;
    Ok(TunedScale {
        scale: t.scale * cfg.noise.sigma,
        ..t
    })
}

pub fn run_sw_experiment(
    kind: ExperimentKind,
    cfg: &SwExperimentConfig,
    seed: u64,
    data_seed: u64,
    repeats: usize,
    exec: Execution,
) -> Result<SwOutcome> {
    cfg.validate(kind)?;
    let setup = build_setup(cfg)?;
    if cfg.sigma_y.mean_sigma() <= 0.0 {
        return Err(Error::InvalidConfig("σ_y must be positive for filtering".into()));
    }
    let data = match &cfg.drifter_data {
        Some(path) => load_drifter_data(&read_drifter_csv(path)?, setup.model.times())?,
        None => {
            let obs = observation_model(&setup, cfg, None)?;
            generate_twin(&setup, &obs, &mut seeded(data_seed, TRUTH_STREAM))?
        }
    };
    let x0 = data.tracks[0].clone();
    let known = kind == ExperimentKind::SwKnown;
    let obs = if known {
        observation_model(&setup, cfg, Some(data.tracks.clone()))?
    } else {
        observation_model(&setup, cfg, None)?
    };

    let (sigma_prime, tuned) = match cfg.proposal.sigma_prime {
        Some(s) => (s, None),
        None => {
            let pilot_obs = if known {
                obs.clone()
            } else {
                let mut xbar1 = x0.clone();
                setup.model.advect_with_flow(&setup.z0, 1, &mut xbar1)?;
                observation_model(&setup, cfg, Some(vec![x0.clone(), xbar1]))?
            };
            let t = tune_sigma_prime(&setup, cfg, &pilot_obs, &data.observations[0], data_seed)?;
            info!("proposal scale σ' = {:.4e} (pilot acceptance {:.3})", t.scale, t.acceptance);
            (t.scale, Some(t))
        }
    };
    let proposal = NoiseCovariance::SineModes(cfg.proposal_noise(sigma_prime).build(setup.grid.nx, setup.grid.ny)?);
    let rwm = RwmConfig::new(cfg.n, cfg.n_burn, proposal, cfg.q)?.with_correction(cfg.index_correction);

    let results = map_indexed(exec, repeats, |m| -> Result<RepeatOutput> {
        let mut rng = repeat_rng(seed, m);
        let steps = if known {
            run_filter(&setup.model, &obs, &setup.z0, &data.observations, &rwm, &mut rng)?
        } else {
            run_filter_unknown(&setup.model, &obs, &setup.z0, &x0, &data.observations, &rwm, &mut rng)?
        };
        info!("repeat {m} done");
        Ok(RepeatOutput { steps })
    });
    let repeats_out = collect_repeats(results)?;

    let n = setup.model.times().n_obs();
    let mut mean = vec![setup.z0.clone()];
    for k in 0..n {
        let mut acc = DVector::zeros(setup.z0.len());
        for r in &repeats_out {
            acc += &r.steps[k].mean;
        }
        mean.push(acc / repeats_out.len() as f64);
    }
    let predicted_tracks = (!known).then(|| {
        let mut out = vec![x0.clone()];
        for k in 0..n {
            let mut avg = vec![Position::default(); x0.len()];
            for r in &repeats_out {
                for (a, p) in avg.iter_mut().zip(r.steps[k].xbar.as_ref().expect("unknown mode records x̄")) {
                    a.x += p.x;
                    a.y += p.y;
                }
            }
            let m = repeats_out.len() as f64;
            out.push(avg.into_iter().map(|a| Position::new(a.x / m, a.y / m)).collect());
        }
        out
    });
    let free = free_run(&setup.model, &setup.z0)?;
    let prior_reference = if known {
        None
    } else {
        Some(compare_prior_reference(&setup.model, &setup.z0, cfg.reference_runs, data_seed, false, exec)?)
    };
    let zero = repeats_out
        .iter()
        .flat_map(|r| &r.steps)
        .filter(|s| s.diagnostics.zero_acceptance)
        .count();
    if zero > 0 {
        warn!("{zero} filter steps rejected every proposal");
    }
    Ok(SwOutcome {
        setup,
        data,
        tuned,
        sigma_prime,
        repeats: repeats_out,
        mean,
        predicted_tracks,
        free_run: free,
        prior_reference,
    })
}

impl SwOutcome {
    /// The series the filter is scored against: the hidden signal for
    /// known locations, the prior reference for unknown locations.
    pub fn reference(&self) -> (&'static str, &[StateVector]) {
        match &self.prior_reference {
            Some(r) => ("prior-reference", r),
            None => ("truth", self.data.truth.as_deref().expect("known-location runs are synthetic")),
        }
    }

    /// `|filter − reference|` over every coordinate and `k = 0..=n`.
    pub fn abs_errors(&self) -> Vec<f64> {
        let (_, reference) = self.reference();
        self.mean
            .iter()
            .zip(reference)
            .flat_map(|(m, r)| m.iter().zip(r.iter()).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .collect()
    }

    pub fn summary(&self, kind: ExperimentKind, cfg: &SwExperimentConfig, seed: u64) -> SwSummary {
        let cells = self.setup.grid.cells();
        let diag: Vec<f64> = self
            .repeats
            .iter()
            .flat_map(|r| r.steps.iter().map(|s| s.diagnostics.acceptance_rate))
            .collect();
        let (reference, _) = self.reference();
        let errors = self.abs_errors();
        SwSummary {
            experiment: kind.name().into(),
            seed,
            repeats: self.repeats.len(),
            dim: self.setup.z0.len(),
            n_obs: self.mean.len() - 1,
            drifters: self.setup.x0.len(),
            sigma_prime: self.sigma_prime,
            mean_acceptance: diag.iter().sum::<f64>() / diag.len().max(1) as f64,
            fraction_within: super::output::fraction_within(&errors, cfg.threshold * cfg.sigma_y.mean_sigma()),
            reference: reference.into(),
            filter_rmse: self.data.truth.as_ref().map(|t| field_rmse(&self.mean, t, cells)),
            free_run_rmse: self.data.truth.as_ref().map(|t| field_rmse(&self.free_run, t, cells)),
            track_rms_cells: match (&self.predicted_tracks, &self.data.truth) {
                (Some(p), Some(_)) => Some(track_rms_cells(p, &self.data.tracks, &self.setup.grid)),
                _ => None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drifters::{ObsNoise, VelocitySampling};
    use crate::harness::config::ProposalSpec;
    use crate::sw::{Integrator, SineNoiseSpec, SupportPolicy};

    fn tiny(modes: usize, sigma: f64) -> SwExperimentConfig {
        SwExperimentConfig {
            fixture: None,
            synthetic: Some(SyntheticScenario {
                nx: 10,
                ny: 10,
                delta: 10_000.0,
                depth: 100.0,
                eddy_height: 0.2,
                eddy_radius: 2.5,
                latitude: 22.0,
            }),
            drifter_data: None,
            tau: 60.0,
            inner_steps: 4,
            n_obs: 3,
            noise: SineNoiseSpec {
                modes,
                sigma,
                support: SupportPolicy::Project,
            },
            proposal: ProposalSpec {
                modes: None,
                sigma_prime: Some(sigma / 4.0),
                acceptance_window: (0.2, 0.3),
                pilot_len: 50,
            },
            n: 30,
            n_burn: 10,
            q: 0.33,
            index_correction: Default::default(),
            drifters: DrifterLayout::Ring { count: 3, radius_cells: 2.0 },
            sigma_y: ObsNoise::Scalar(0.01),
            sampling: VelocitySampling::Bilinear,
            integrator: Integrator::Heun,
            threshold: 0.5,
            reference_runs: 4,
            histogram_bins: 40,
            snapshots: vec![],
        }
    }

    #[test]
    fn eddy_is_in_geostrophic_balance() {
        let cfg = tiny(3, 1e-3);
        let (grid, params, z) = synthetic_eddy(cfg.synthetic.as_ref().unwrap()).unwrap();
        let n = grid.cells();
        // Centred difference of ζ against f u = −g ∂ζ/∂y at an interior node.
        let (i, j) = (6, 4);
        let dzdy = (z[grid.flat(i, j + 1)] - z[grid.flat(i, j - 1)]) / (2.0 * grid.dy());
        let f = params.coriolis(grid.y(j));
        let u = z[n + grid.flat(i, j)];
        assert!((f * u + params.g * dzdy).abs() < 0.1 * (f * u).abs());
    }

    #[test]
    fn zero_noise_reference_is_the_free_run() {
        let setup = build_setup(&tiny(1, 1e-3)).unwrap();
        let r = compare_prior_reference(&setup.model, &setup.z0, 3, 1, false, Execution::Sequential).unwrap();
        let f = free_run(&setup.model, &setup.z0).unwrap();
        for (a, b) in r.iter().zip(&f) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn antithetic_pair_cancels() {
        // Small noise keeps the dynamics close to linear over a few steps.
        let setup = build_setup(&tiny(3, 1e-9)).unwrap();
        let r = compare_prior_reference(&setup.model, &setup.z0, 2, 7, true, Execution::Sequential).unwrap();
        let f = free_run(&setup.model, &setup.z0).unwrap();
        for (a, b) in r.iter().zip(&f) {
            assert!((a - b).amax() < 1e-10);
        }
        assert!(compare_prior_reference(&setup.model, &setup.z0, 3, 7, true, Execution::Sequential).is_err());
    }

    #[test]
    fn twin_tracks_follow_the_truth() {
        let cfg = tiny(3, 1e-3);
        let setup = build_setup(&cfg).unwrap();
        let obs = observation_model(&setup, &cfg, None).unwrap();
        let data = generate_twin(&setup, &obs, &mut seeded(3, TRUTH_STREAM)).unwrap();
        assert_eq!(data.tracks.len(), 4);
        assert_eq!(data.observations.len(), 3);
        assert_eq!(data.observations[0].len(), 6);
        assert!(data.tracks[3].iter().zip(&data.tracks[0]).any(|(a, b)| a != b));
    }

    #[test]
    fn drifter_records_map_onto_observation_times() {
        let times = TimeGrid::uniform(2, 600.0, 10).unwrap();
        let mut recs = Vec::new();
        for k in 0..=2 {
            for id in [7u32, 3] {
                recs.push(DrifterRecord {
                    id,
                    t: 600.0 * k as f64 + 1.0,
                    x: id as f64,
                    y: k as f64,
                    u_obs: 0.1 * id as f64,
                    v_obs: -0.1 * k as f64,
                });
            }
        }
        let d = load_drifter_data(&recs, &times).unwrap();
        assert_eq!(d.tracks[2], vec![Position::new(3.0, 2.0), Position::new(7.0, 2.0)]);
        assert_eq!(d.observations[1].values.as_slice(), &[0.30000000000000004, -0.2, 0.7000000000000001, -0.2]);
        recs.pop();
        assert!(load_drifter_data(&recs, &times).is_err());
    }

    #[test]
    fn repeats_are_seed_determined() {
        let cfg = tiny(3, 1e-3);
        let a = run_sw_experiment(ExperimentKind::SwUnknown, &cfg, 5, 5, 2, Execution::Sequential).unwrap();
        let b = run_sw_experiment(ExperimentKind::SwUnknown, &cfg, 5, 5, 2, Execution::Parallel).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.predicted_tracks, b.predicted_tracks);
        // Repeat m of an M = 2 run is repeat m + 1 of a run seeded one lower.
        let c = run_sw_experiment(ExperimentKind::SwUnknown, &cfg, 4, 5, 2, Execution::Sequential).unwrap();
        assert_eq!(a.repeats[0].steps[2].mean, c.repeats[1].steps[2].mean);
    }
}
