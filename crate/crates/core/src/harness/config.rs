//! Declarative run configuration (TOML or JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drifters::{ObsNoise, Position, VelocitySampling};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linear::LinearBenchConfig;
use crate::smcmc::IndexCorrection;
use crate::sw::{Integrator, SineNoiseSpec, SupportPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Fully or sparsely observed linear-Gaussian benchmark.
    Linear,
    /// Linear benchmark with error summaries split by observed and
    /// unobserved coordinates.
    LinearPartial,
    SwKnown,
    SwUnknown,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Linear => "linear",
            ExperimentKind::LinearPartial => "linear-partial",
            ExperimentKind::SwKnown => "sw-known",
            ExperimentKind::SwUnknown => "sw-unknown",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, ExperimentKind::Linear | ExperimentKind::LinearPartial)
    }
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    /// Base seed; repeat `m` uses `seed + m`.
    #[serde(default)]
    pub seed: u64,
    /// Seed of the synthetic truth and data; defaults to `seed`.
    #[serde(default)]
    pub data_seed: Option<u64>,
    /// `M`, independent filter repeats averaged into the reported mean.
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub linear: Option<LinearBenchConfig>,
    #[serde(default)]
    pub sw: Option<SwExperimentConfig>,
}

impl RunConfig {
    /// Parses `.json` as JSON and anything else as TOML. Relative fixture
    /// paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        if let Some(dir) = path.parent() {
            if let Some(sw) = cfg.sw.as_mut() {
                for p in [sw.fixture.as_mut(), sw.drifter_data.as_mut()].into_iter().flatten() {
                    if p.is_relative() {
                        *p = dir.join(&*p);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats (M) must be >= 1".into()));
        }
        if self.experiment.is_linear() {
            self.linear
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("{} needs a [linear] section", self.experiment.name())))?
                .validate()
        } else {
            let sw = self
                .sw
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig(format!("{} needs a [sw] section", self.experiment.name())))?;
            sw.validate(self.experiment)
        }
    }

    pub fn linear(&self) -> Result<&LinearBenchConfig> {
        self.linear.as_ref().ok_or_else(|| Error::InvalidConfig("missing [linear] section".into()))
    }

    pub fn sw(&self) -> Result<&SwExperimentConfig> {
        self.sw.as_ref().ok_or_else(|| Error::InvalidConfig("missing [sw] section".into()))
    }
}

/// Synthetic scenario used when no fixture is given: a geostrophically
/// balanced Gaussian eddy over flat bathymetry with Dirichlet edges held at
/// the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in metres.
    pub delta: f64,
    /// Resting depth `H` in metres.
    pub depth: f64,
    /// Eddy surface elevation amplitude in metres.
    pub eddy_height: f64,
    /// Eddy e-folding radius in cells.
    pub eddy_radius: f64,
    /// Central latitude `ψ_0` in degrees.
    pub latitude: f64,
}

/// Drifter launch positions: explicit, or evenly spaced on a circle around
/// the domain centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "layout")]
pub enum DrifterLayout {
    Ring { count: usize, radius_cells: f64 },
    Explicit { positions: Vec<Position> },
}

impl DrifterLayout {
    pub fn count(&self) -> usize {
        match self {
            DrifterLayout::Ring { count, .. } => *count,
            DrifterLayout::Explicit { positions } => positions.len(),
        }
    }
}

/// SMCMC proposal `W'`: sine-mode noise with scale `σ'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    /// Number of modes; defaults to the signal noise `J`.
    #[serde(default)]
    pub modes: Option<usize>,
    /// `σ'`; tuned by a pilot run of the first step when absent.
    #[serde(default)]
    pub sigma_prime: Option<f64>,
    #[serde(default = "default_window")]
    pub acceptance_window: (f64, f64),
    #[serde(default = "default_pilot")]
    pub pilot_len: usize,
}

fn default_window() -> (f64, f64) {
    (0.2, 0.3)
}

fn default_pilot() -> usize {
    300
}

fn default_q() -> f64 {
    0.33
}

fn default_threshold() -> f64 {
    0.5
}

fn default_reference_runs() -> usize {
    50
}

fn default_bins() -> usize {
    40
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwExperimentConfig {
    /// Fixture manifest (JSON); the synthetic scenario is used when absent.
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticScenario>,
    /// Drifter CSV with real observations (unknown-location mode only).
    #[serde(default)]
    pub drifter_data: Option<PathBuf>,
    /// `τ`, inner time step in seconds.
    pub tau: f64,
    /// `L`, inner steps per observation interval.
    pub inner_steps: usize,
    /// `n`, number of observation times.
    pub n_obs: usize,
    /// Signal noise `W` (`J`, `σ`).
    pub noise: SineNoiseSpec,
    pub proposal: ProposalSpec,
    /// `N`.
    pub n: usize,
    /// `N_burn`.
    pub n_burn: usize,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub index_correction: IndexCorrection,
    pub drifters: DrifterLayout,
    /// `σ_y`, scalar or per drifter.
    pub sigma_y: ObsNoise,
    #[serde(default)]
    pub sampling: VelocitySampling,
    #[serde(default)]
    pub integrator: Integrator,
    /// Errors below `threshold · σ_y` count as accurate.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// `K`, noise-driven free runs averaged into the prior reference.
    #[serde(default = "default_reference_runs")]
    pub reference_runs: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Observation indices at which gridded snapshots are written.
    #[serde(default)]
    pub snapshots: Vec<usize>,
}

impl SwExperimentConfig {
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        match (&self.fixture, &self.synthetic) {
            (Some(p), _) if !p.exists() => {
                return Err(Error::InvalidConfig(format!("fixture manifest {} does not exist", p.display())));
            }
            (None, None) => return Err(Error::InvalidConfig("either fixture or synthetic must be given".into())),
            _ => {}
        }
        if let Some(p) = &self.drifter_data {
            if kind != ExperimentKind::SwUnknown {
                return Err(Error::InvalidConfig("drifter_data is only used by sw-unknown".into()));
            }
            if !p.exists() {
                return Err(Error::InvalidConfig(format!("drifter data {} does not exist", p.display())));
            }
        }
        if !(self.tau > 0.0) || self.inner_steps == 0 || self.n_obs == 0 {
            return Err(Error::InvalidConfig("tau, inner_steps and n_obs must be positive".into()));
        }
        if self.n == 0 || !(self.q > 0.0 && self.q <= 0.5) {
            return Err(Error::InvalidConfig("N must be >= 1 and q in (0, 1/2]".into()));
        }
        if self.drifters.count() == 0 {
            return Err(Error::InvalidConfig("at least one drifter is required".into()));
        }
        if kind == ExperimentKind::SwUnknown && self.reference_runs < 2 {
            return Err(Error::InvalidConfig("the prior reference needs K >= 2 free runs".into()));
        }
        if let Some(s) = self.snapshots.iter().find(|&&s| s > self.n_obs) {
            return Err(Error::InvalidConfig(format!("snapshot index {s} is beyond n = {}", self.n_obs)));
        }
        Ok(())
    }

    /// Sine-mode proposal spec at scale `σ'`.
    pub fn proposal_noise(&self, sigma_prime: f64) -> SineNoiseSpec {
        SineNoiseSpec {
            modes: self.proposal.modes.unwrap_or(self.noise.modes),
            sigma: sigma_prime,
            support: SupportPolicy::Project,
        }
    }
}
