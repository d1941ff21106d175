//! Sequential MCMC filtering for known and unknown observer locations.

use log::{debug, warn};
use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{run_chain, AuxTarget, ChainDiagnostics, ChainState, IndexCorrection};
use crate::drifters::Position;
use crate::error::{check_len, Error, Result};
use crate::model::{Dynamics, NoiseCovariance, ObsVector, ObservationModel, StateVector};

/// Dynamics that can also advect observer positions through the inner
/// steps of one flow interval (Euler, using the velocity before each step).
pub trait LagrangianDynamics: Dynamics {
    fn advect_with_flow(&self, state: &StateVector, k: usize, positions: &mut [Position]) -> Result<StateVector>;
}

#[derive(Clone, Debug)]
pub struct RwmConfig {
    /// `N`, retained chain length.
    pub n_samples: usize,
    /// `N_burn`, discarded steps.
    pub n_burn: usize,
    /// `Q'`, state proposal covariance.
    pub proposal: NoiseCovariance,
    /// `q`, index random-walk probability.
    pub q: f64,
    pub index_correction: IndexCorrection,
}

impl RwmConfig {
    pub fn new(n_samples: usize, n_burn: usize, proposal: NoiseCovariance, q: f64) -> Result<Self> {
        let cfg = RwmConfig {
            n_samples,
            n_burn,
            proposal,
            q,
            index_correction: IndexCorrection::Exact,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `σ'² I` proposal.
    pub fn isotropic(n_samples: usize, n_burn: usize, dim: usize, sigma_prime: f64, q: f64) -> Result<Self> {
        Self::new(n_samples, n_burn, NoiseCovariance::isotropic(dim, sigma_prime)?, q)
    }

    pub fn with_correction(mut self, c: IndexCorrection) -> Self {
        self.index_correction = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("N must be >= 1".into()));
        }
        if !(self.q > 0.0 && self.q <= 0.5) {
            return Err(Error::InvalidConfig(format!("q must lie in (0, 1/2], got {}", self.q)));
        }
        Ok(())
    }
}

/// `N` retained samples approximating the filter at time index `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub k: usize,
    pub samples: Vec<StateVector>,
}

impl SampleSet {
    /// The time-zero point mass at a known initial state.
    pub fn initial(z0: StateVector) -> Self {
        SampleSet { k: 0, samples: vec![z0] }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> StateVector {
        let mut m = DVector::zeros(self.samples[0].len());
        for s in &self.samples {
            m += s;
        }
        m / self.samples.len() as f64
    }

    /// Marginal standard deviations (population form).
    pub fn marginal_std(&self) -> StateVector {
        let m = self.mean();
        let mut v = DVector::zeros(m.len());
        for s in &self.samples {
            v += (s - &m).map(|e| e * e);
        }
        (v / self.samples.len() as f64).map(f64::sqrt)
    }
}

/// `(1/N) Σ φ(z_i)`.
pub fn estimate<F: Fn(&StateVector) -> f64>(samples: &SampleSet, phi: F) -> f64 {
    samples.samples.iter().map(phi).sum::<f64>() / samples.samples.len() as f64
}

/// Lazily computed deterministic flows, one per ancestor index.
#[derive(Clone, Debug)]
pub struct FlowCache {
    flows: Vec<Option<StateVector>>,
    evaluations: usize,
}

impl FlowCache {
    pub fn new(n: usize) -> Self {
        FlowCache {
            flows: vec![None; n],
            evaluations: 0,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn insert(&mut self, j: usize, flow: StateVector) {
        if self.flows[j].is_none() {
            self.evaluations += 1;
        }
        self.flows[j] = Some(flow);
    }

    pub fn get_or_compute<F>(&mut self, j: usize, f: F) -> Result<&StateVector>
    where
        F: FnOnce() -> Result<StateVector>,
    {
        if self.flows[j].is_none() {
            let v = f()?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("deterministic flow"));
            }
            self.evaluations += 1;
            self.flows[j] = Some(v);
        }
        Ok(self.flows[j].as_ref().expect("flow cached above"))
    }
}

/// The joint target for one filter step.
pub struct FilterTarget<'a, D: ?Sized, O: ?Sized> {
    pub dynamics: &'a D,
    pub obs: &'a O,
    pub y: &'a ObsVector,
    pub locations: Option<&'a [Position]>,
    pub ancestors: &'a [StateVector],
    pub cache: FlowCache,
}

impl<'a, D: Dynamics + ?Sized, O: ObservationModel + ?Sized> FilterTarget<'a, D, O> {
    pub fn new(dynamics: &'a D, obs: &'a O, y: &'a ObsVector, locations: Option<&'a [Position]>, ancestors: &'a [StateVector]) -> Self {
        FilterTarget {
            dynamics,
            obs,
            y,
            locations,
            ancestors,
            cache: FlowCache::new(ancestors.len()),
        }
    }

    pub fn flow(&mut self, j: usize) -> Result<&StateVector> {
        let (d, anc, k) = (self.dynamics, &self.ancestors[j], self.y.k);
        self.cache.get_or_compute(j, || d.flow(anc, k))
    }
}

impl<D: Dynamics + ?Sized, O: ObservationModel + ?Sized> AuxTarget for FilterTarget<'_, D, O> {
    fn n_ancestors(&self) -> usize {
        self.ancestors.len()
    }

    fn log_target(&mut self, z: &StateVector, j: usize) -> Result<f64> {
        let ll = self.obs.log_likelihood(z, self.y, self.locations)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite("log-likelihood"));
        }
        let noise = self.dynamics.noise();
        let mean = self.flow(j)?;
        let lf = noise.log_density(&(z - mean))?;
        Ok(ll + lf)
    }
}

fn run_step<D, O, R>(
    mut target: FilterTarget<'_, D, O>,
    cfg: &RwmConfig,
    rng: &mut R,
) -> Result<(SampleSet, ChainDiagnostics)>
where
    D: Dynamics + ?Sized,
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let n = target.ancestors.len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty ancestor pool".into()));
    }
    let j0 = if n == 1 { 0 } else { rng.random_range(0..n) };
    let mut z = target.flow(j0)?.clone();
    target.dynamics.noise().perturb(&mut z, rng);
    let log_target = target.log_target(&z, j0)?;
    let init = ChainState { z, j: j0, log_target };
    let (samples, mut diag) = run_chain(
        &mut target,
        init,
        &cfg.proposal,
        cfg.n_samples,
        cfg.n_burn,
        cfg.q,
        cfg.index_correction,
        rng,
    )?;
    diag.flow_evaluations = target.cache.evaluations();
    if diag.zero_acceptance {
        warn!("step {}: every proposal was rejected", target.y.k);
    }
    Ok((SampleSet { k: target.y.k, samples }, diag))
}

/// One filter update with known observer locations (held by `obs`, or
/// passed in `locations`). `prev` is the time-`k-1` sample set; at `k = 1`
/// pass [`SampleSet::initial`] so the chain targets the exact first filter.
pub fn smcmc_filter_step_known<D, O, R>(
    prev: &SampleSet,
    dynamics: &D,
    obs: &O,
    y: &ObsVector,
    locations: Option<&[Position]>,
    cfg: &RwmConfig,
    rng: &mut R,
) -> Result<(SampleSet, ChainDiagnostics)>
where
    D: Dynamics + ?Sized,
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    check_len("ancestor state", dynamics.dim(), prev.samples.first().map_or(0, |s| s.len()))?;
    let target = FilterTarget::new(dynamics, obs, y, locations, &prev.samples);
    run_step(target, cfg, rng)
}

/// Predicted observer positions `x̄_k`, one per drifter.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedLocations {
    pub k: usize,
    pub xbar: Vec<Position>,
}

/// Monte Carlo prediction of `x̄_k`: advect `x̄_{k-1}` along each ancestor's
/// flow and average. Fills `cache` with the flows as a side effect.
pub fn predict_locations<D>(
    prev: &SampleSet,
    xbar_prev: &[Position],
    dynamics: &D,
    k: usize,
    cache: &mut FlowCache,
) -> Result<Vec<Position>>
where
    D: LagrangianDynamics + ?Sized,
{
    let mut acc = vec![Position::default(); xbar_prev.len()];
    for (r, anc) in prev.samples.iter().enumerate() {
        let mut pos = xbar_prev.to_vec();
        let flow = dynamics.advect_with_flow(anc, k, &mut pos)?;
        if flow.iter().any(|x| !x.is_finite()) {
            return Err(Error::FlowBlowUp { k });
        }
        cache.insert(r, flow);
        for (a, p) in acc.iter_mut().zip(&pos) {
            a.x += p.x;
            a.y += p.y;
        }
    }
    let n = prev.samples.len() as f64;
    Ok(acc.into_iter().map(|a| Position::new(a.x / n, a.y / n)).collect())
}

/// One filter update with unknown observer locations.
pub fn smcmc_filter_step_unknown<D, O, R>(
    prev: &SampleSet,
    xbar_prev: &PredictedLocations,
    dynamics: &D,
    obs: &O,
    y: &ObsVector,
    cfg: &RwmConfig,
    rng: &mut R,
) -> Result<(SampleSet, PredictedLocations, ChainDiagnostics)>
where
    D: LagrangianDynamics + ?Sized,
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    check_len("ancestor state", dynamics.dim(), prev.samples.first().map_or(0, |s| s.len()))?;
    let mut cache = FlowCache::new(prev.samples.len());
    let xbar = predict_locations(prev, &xbar_prev.xbar, dynamics, y.k, &mut cache)?;
    let mut target = FilterTarget::new(dynamics, obs, y, Some(&xbar), &prev.samples);
    target.cache = cache;
    let (set, diag) = run_step(target, cfg, rng)?;
    Ok((set, PredictedLocations { k: y.k, xbar }, diag))
}

/// Per-step filter output.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterStep {
    pub k: usize,
    pub mean: StateVector,
    pub std: StateVector,
    pub diagnostics: ChainDiagnostics,
    pub xbar: Option<Vec<Position>>,
}

/// Runs the known-location filter over all observations. `on_step` sees
/// every sample set as it is produced.
pub fn run_filter_with<D, O, R, F>(
    dynamics: &D,
    obs: &O,
    z0: &StateVector,
    observations: &[ObsVector],
    cfg: &RwmConfig,
    rng: &mut R,
    mut on_step: F,
) -> Result<Vec<FilterStep>>
where
    D: Dynamics + ?Sized,
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&SampleSet),
{
    let mut prev = SampleSet::initial(z0.clone());
    let mut out = Vec::with_capacity(observations.len());
    for y in observations {
        let (set, diag) = smcmc_filter_step_known(&prev, dynamics, obs, y, None, cfg, rng)?;
        debug!("step {}: acceptance {:.3}", y.k, diag.acceptance_rate);
        on_step(&set);
        out.push(FilterStep {
            k: y.k,
            mean: set.mean(),
            std: set.marginal_std(),
            diagnostics: diag,
            xbar: None,
        });
        prev = set;
    }
    Ok(out)
}

pub fn run_filter<D, O, R>(
    dynamics: &D,
    obs: &O,
    z0: &StateVector,
    observations: &[ObsVector],
    cfg: &RwmConfig,
    rng: &mut R,
) -> Result<Vec<FilterStep>>
where
    D: Dynamics + ?Sized,
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    run_filter_with(dynamics, obs, z0, observations, cfg, rng, |_| {})
}

/// Runs the unknown-location filter from known initial positions `x0`.
pub fn run_filter_unknown<D, O, R>(
    dynamics: &D,
    obs: &O,
    z0: &StateVector,
    x0: &[Position],
    observations: &[ObsVector],
    cfg: &RwmConfig,
    rng: &mut R,
) -> Result<Vec<FilterStep>>
where
    D: LagrangianDynamics + ?Sized,
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    let mut prev = SampleSet::initial(z0.clone());
    let mut xbar = PredictedLocations { k: 0, xbar: x0.to_vec() };
    let mut out = Vec::with_capacity(observations.len());
    for y in observations {
        let (set, next, diag) = smcmc_filter_step_unknown(&prev, &xbar, dynamics, obs, y, cfg, rng)?;
        out.push(FilterStep {
            k: y.k,
            mean: set.mean(),
            std: set.marginal_std(),
            diagnostics: diag,
            xbar: Some(next.xbar.clone()),
        });
        prev = set;
        xbar = next;
    }
    Ok(out)
}

/// Outcome of the proposal-scale pilot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedScale {
    pub scale: f64,
    pub acceptance: f64,
    pub rounds: usize,
}

/// Pilot runs of the first filter step that search for a multiplier of
/// `base` giving acceptance in `[lo, hi]`. Bisects in log-scale once the
/// target window is bracketed.
#[allow(clippy::too_many_arguments)]
pub fn tune_proposal_scale<D, O, R>(
    dynamics: &D,
    obs: &O,
    z0: &StateVector,
    y1: &ObsVector,
    base: &NoiseCovariance,
    pilot_len: usize,
    window: (f64, f64),
    rng: &mut R,
) -> Result<TunedScale>
where
    D: Dynamics + ?Sized,
    O: ObservationModel + ?Sized,
    R: Rng + ?Sized,
{
    let prev = SampleSet::initial(z0.clone());
    let (lo, hi) = window;
    let mut scale = 1.0;
    let (mut below, mut above): (Option<f64>, Option<f64>) = (None, None);
    let mut acceptance = 0.0;
    for round in 1..=30 {
        let cfg = RwmConfig::new(pilot_len, pilot_len / 2, base.scaled(scale), 0.33)?;
        let (_, diag) = smcmc_filter_step_known(&prev, dynamics, obs, y1, None, &cfg, rng)?;
        acceptance = diag.acceptance_rate;
        debug!("pilot round {round}: scale {scale:.4e} acceptance {acceptance:.3}");
        if acceptance >= lo && acceptance <= hi {
            return Ok(TunedScale { scale, acceptance, rounds: round });
        }
        // Low acceptance means the step is too large.
        if acceptance < lo {
            above = Some(above.map_or(scale, |a: f64| a.min(scale)));
        } else {
            below = Some(below.map_or(scale, |b: f64| b.max(scale)));
        }
        scale = match (below, above) {
            (Some(b), Some(a)) => (b * a).sqrt(),
            (None, Some(a)) => a / 3.0,
            (Some(b), None) => b * 3.0,
            (None, None) => unreachable!(),
        };
    }
    Ok(TunedScale { scale, acceptance, rounds: 30 })
}
