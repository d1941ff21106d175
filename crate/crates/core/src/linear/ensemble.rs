//! Ensemble Kalman baselines: stochastic EnKF, ETKF, ESTKF and the
//! R-localized EnKF.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::LinearModel;
use crate::error::{check_len, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::model::ObsVector;

/// Members stored as the columns of a `d × N_e` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::InvalidConfig(format!("ensemble needs at least 2 members, got {}", members.ncols())));
        }
        Ok(Ensemble { members })
    }

    /// `z0 + N(0, σ² I)` members.
    pub fn around<R: Rng + ?Sized>(z0: &DVector<f64>, n_members: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        let d = z0.len();
        let mut m = DMatrix::zeros(d, n_members);
        for c in 0..n_members {
            for r in 0..d {
                let e: f64 = rng.sample(StandardNormal);
                m[(r, c)] = z0[r] + sigma * e;
            }
        }
        Self::new(m)
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn n_members(&self) -> usize {
        self.members.ncols()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.members.column_mean()
    }

    pub fn anomalies(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut x = self.members.clone();
        for mut c in x.column_iter_mut() {
            c -= &mean;
        }
        x
    }

    fn from_parts(mean: &DVector<f64>, anomalies: DMatrix<f64>) -> Self {
        let mut members = anomalies;
        for mut c in members.column_iter_mut() {
            c += mean;
        }
        Ensemble { members }
    }
}

/// Propagates every member through `A z + σ_z W`.
pub fn forecast<R: Rng + ?Sized>(ens: &Ensemble, model: &LinearModel, rng: &mut R) -> Result<Ensemble> {
    check_len("ensemble state", model.dim(), ens.dim())?;
    let mut members = model.transition.apply_columns(&ens.members);
    for v in members.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += model.sigma_z * e;
    }
    Ok(Ensemble { members })
}

/// How the EnKF innovation system is solved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnkfSolver {
    /// Woodbury when `d_y > N_e`, direct otherwise.
    #[default]
    Auto,
    Direct,
    Woodbury,
}

/// Solves `(S Sᵀ/(N−1) + diag(r)) Z = D`.
fn innovation_solve(s: &DMatrix<f64>, r: &DVector<f64>, d: &DMatrix<f64>, solver: EnkfSolver) -> Result<DMatrix<f64>> {
    let (dy, n) = s.shape();
    let nm1 = (n - 1) as f64;
    let woodbury = match solver {
        EnkfSolver::Auto => dy > n,
        EnkfSolver::Direct => false,
        EnkfSolver::Woodbury => true,
    };
    if !woodbury {
        let mut sys = s * s.transpose() / nm1;
        for i in 0..dy {
            sys[(i, i)] += r[i];
        }
        let chol = sys.cholesky().ok_or(Error::NotPositiveDefinite("EnKF innovation covariance"))?;
        return Ok(chol.solve(d));
    }
    // R⁻¹D − R⁻¹S((N−1)I + SᵀR⁻¹S)⁻¹SᵀR⁻¹D
    let mut rinv_d = d.clone();
    let mut rinv_s = s.clone();
    for i in 0..dy {
        rinv_d.row_mut(i).unscale_mut(r[i]);
        rinv_s.row_mut(i).unscale_mut(r[i]);
    }
    let mut small = s.transpose() * &rinv_s;
    for i in 0..n {
        small[(i, i)] += nm1;
    }
    let chol = small.cholesky().ok_or(Error::NotPositiveDefinite("EnKF Woodbury core"))?;
    let inner = chol.solve(&(s.transpose() * &rinv_d));
    Ok(rinv_d - rinv_s * inner)
}

/// `X'_rows Sᵀ Z / (N−1)` with the cheaper multiplication order.
fn gain_times(xp_rows: &DMatrix<f64>, s: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.ncols();
    let nm1 = (n - 1) as f64;
    if xp_rows.nrows() <= n {
        (xp_rows * s.transpose()) * z / nm1
    } else {
        xp_rows * (s.transpose() * z) / nm1
    }
}

fn check_obs(model: &LinearModel, ens: &Ensemble, y: &ObsVector) -> Result<()> {
    check_len("ensemble state", model.dim(), ens.dim())?;
    check_len("ensemble observation", model.selector.obs_dim(), y.len())
}

fn inflated_anomalies(ens: &Ensemble, inflation: f64) -> DMatrix<f64> {
    let mut xp = ens.anomalies();
    if inflation != 1.0 {
        xp *= inflation;
    }
    xp
}

/// Draws the standard-normal observation perturbations (`d_y × N_e`).
pub fn draw_perturbations<R: Rng + ?Sized>(obs_dim: usize, n_members: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(obs_dim, n_members, |_, _| rng.sample(StandardNormal))
}

/// Perturbed-observation analysis with given standard-normal draws `e`
/// (`d_y × N_e`); member `i` assimilates `y + σ_y e_i`.
pub fn enkf_analysis(
    ens: &Ensemble,
    model: &LinearModel,
    y: &ObsVector,
    e: &DMatrix<f64>,
    inflation: f64,
    solver: EnkfSolver,
) -> Result<Ensemble> {
    check_obs(model, ens, y)?;
    let n = ens.n_members();
    let dy = y.len();
    check_len("perturbation rows", dy, e.nrows())?;
    check_len("perturbation columns", n, e.ncols())?;
    let mean = ens.mean();
    let xp = inflated_anomalies(ens, inflation);
    if dy == 0 {
        return Ok(Ensemble::from_parts(&mean, xp));
    }
    let s = model.selector.apply_columns(&xp);
    let hx_mean = model.selector.apply(&mean);
    let sy = model.sigma_y;
    let mut d = DMatrix::zeros(dy, n);
    for c in 0..n {
        for r in 0..dy {
            d[(r, c)] = y.values[r] + sy * e[(r, c)] - hx_mean[r] - s[(r, c)];
        }
    }
    let z = innovation_solve(&s, &DVector::from_element(dy, sy * sy), &d, solver)?;
    let members = Ensemble::from_parts(&mean, &xp + gain_times(&xp, &s, &z));
    if members.members.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("EnKF analysis"));
    }
    Ok(members)
}

pub fn enkf_step<R: Rng + ?Sized>(
    ens: &Ensemble,
    model: &LinearModel,
    y: &ObsVector,
    inflation: f64,
    solver: EnkfSolver,
    rng: &mut R,
) -> Result<Ensemble> {
    let e = draw_perturbations(y.len(), ens.n_members(), rng);
    enkf_analysis(ens, model, y, &e, inflation, solver)
}

/// Square-root analysis in the weight space of `B = R^{-1/2} S`
/// (`d_y × n`): the analysis transform is `I + W diag(t) Wᵀ` and the mean
/// increment is `X' mean_weights`.
struct TransformCore {
    w: DMatrix<f64>,
    t: DVector<f64>,
    mean_weights: DVector<f64>,
}

/// `(sqrt(a/(a+s)) − 1)/s`, finite at `s = 0`.
fn sqrt_factor_over_s(a: f64, s: f64) -> f64 {
    let r = (a + s).sqrt();
    -1.0 / (r * (a.sqrt() + r))
}

/// Uses the eigendecomposition of whichever Gram matrix of `B` is smaller;
/// every quantity is a smooth function of the eigenvalues, so rank
/// deficiency (the centred anomalies always lose one) is harmless.
fn transform_core(b: &DMatrix<f64>, scaled_innov: &DVector<f64>, nm1: f64) -> Result<TransformCore> {
    let (dy, n) = b.shape();
    let core = if dy <= n {
        let eig = (b * b.transpose()).symmetric_eigen();
        let lam = eig.eigenvalues.map(|l| l.max(0.0));
        let u = eig.eigenvectors;
        let w = b.transpose() * &u;
        let proj = u.transpose() * scaled_innov;
        let coef = DVector::from_fn(lam.len(), |i, _| proj[i] / (nm1 + lam[i]));
        TransformCore {
            mean_weights: &w * coef,
            t: lam.map(|l| sqrt_factor_over_s(nm1, l)),
            w,
        }
    } else {
        let eig = (b.transpose() * b).symmetric_eigen();
        let lam = eig.eigenvalues.map(|l| l.max(0.0));
        let v = eig.eigenvectors;
        let proj = v.transpose() * (b.transpose() * scaled_innov);
        let coef = DVector::from_fn(lam.len(), |i, _| proj[i] / (nm1 + lam[i]));
        TransformCore {
            mean_weights: &v * coef,
            t: lam.map(|l| l * sqrt_factor_over_s(nm1, l)),
            w: v,
        }
    };
    if core.mean_weights.iter().chain(core.t.iter()).chain(core.w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transform matrix"));
    }
    Ok(core)
}

/// `A D Bᵀ` for diagonal `D`.
fn scaled_outer(a: &DMatrix<f64>, diag: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut ad = a.clone();
    for (mut c, w) in ad.column_iter_mut().zip(diag.iter()) {
        c *= *w;
    }
    ad * b.transpose()
}

/// Ensemble transform Kalman filter with the symmetric square root.
pub fn etkf_step(ens: &Ensemble, model: &LinearModel, y: &ObsVector, inflation: f64) -> Result<Ensemble> {
    check_obs(model, ens, y)?;
    let nm1 = (ens.n_members() - 1) as f64;
    let mean = ens.mean();
    let xp = inflated_anomalies(ens, inflation);
    if y.is_empty() {
        return Ok(Ensemble::from_parts(&mean, xp));
    }
    let sy = model.sigma_y;
    let b = model.selector.apply_columns(&xp) / sy;
    let innov = (&y.values - model.selector.apply(&mean)) / sy;
    let core = transform_core(&b, &innov, nm1)?;
    let mean_a = &mean + &xp * &core.mean_weights;
    let xw = &xp * &core.w;
    let xa = &xp + scaled_outer(&xw, &core.t, &core.w);
    Ok(Ensemble::from_parts(&mean_a, xa))
}

/// `M T` for the `N × (N−1)` error-subspace projection, `M` with `N` columns.
fn right_project(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let sn = (n as f64).sqrt();
    let c = (1.0 / n as f64) / (1.0 / sn + 1.0);
    let head_sum: DVector<f64> = m.columns(0, n - 1).column_sum();
    let last = m.column(n - 1);
    let mut out = m.columns(0, n - 1).into_owned();
    for mut col in out.column_iter_mut() {
        col.axpy(-c, &head_sum, 1.0);
        col.axpy(-1.0 / sn, &last, 1.0);
    }
    out
}

/// `T V` for `V` with `N − 1` rows.
fn left_project(v: &DMatrix<f64>) -> DMatrix<f64> {
    let nm1 = v.nrows();
    let n = nm1 + 1;
    let sn = (n as f64).sqrt();
    let c = (1.0 / n as f64) / (1.0 / sn + 1.0);
    let colsum = v.row_sum();
    let mut out = DMatrix::zeros(n, v.ncols());
    out.rows_mut(0, nm1).copy_from(v);
    for j in 0..v.ncols() {
        for i in 0..nm1 {
            out[(i, j)] -= c * colsum[j];
        }
        out[(nm1, j)] = -colsum[j] / sn;
    }
    out
}

/// Error-subspace transform Kalman filter.
pub fn estkf_step(ens: &Ensemble, model: &LinearModel, y: &ObsVector, inflation: f64) -> Result<Ensemble> {
    check_obs(model, ens, y)?;
    let nm1 = (ens.n_members() - 1) as f64;
    let mean = ens.mean();
    let xp = inflated_anomalies(ens, inflation);
    if y.is_empty() {
        return Ok(Ensemble::from_parts(&mean, xp));
    }
    let sy = model.sigma_y;
    let l = right_project(&xp);
    let b = model.selector.apply_columns(&l) / sy;
    let innov = (&y.values - model.selector.apply(&mean)) / sy;
    let core = transform_core(&b, &innov, nm1)?;
    let mean_a = &mean + &l * &core.mean_weights;
    let lw = &l * &core.w;
    let tw = left_project(&core.w);
    let xa = &xp + scaled_outer(&lw, &core.t, &tw);
    Ok(Ensemble::from_parts(&mean_a, xa))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Taper {
    #[default]
    GaspariCohn,
    Exponential,
}

/// Fifth-order piecewise rational function with half-width `c`; zero
/// beyond `2c`.
pub fn gaspari_cohn(dist: f64, c: f64) -> f64 {
    let r = dist.abs() / c;
    if r <= 1.0 {
        (((-0.25 * r + 0.5) * r + 0.625) * r - 5.0 / 3.0) * r * r + 1.0
    } else if r <= 2.0 {
        ((((r / 12.0 - 0.5) * r + 0.625) * r + 5.0 / 3.0) * r - 5.0) * r + 4.0 - 2.0 / (3.0 * r)
    } else {
        0.0
    }
}

impl Taper {
    /// Weight of an observation at `dist` for localization `radius`
    /// (`None` means unlimited, every weight 1).
    pub fn weight(self, dist: f64, radius: Option<f64>) -> f64 {
        let Some(radius) = radius else { return 1.0 };
        if dist > radius {
            return 0.0;
        }
        let half = radius / 2.0;
        match self {
            Taper::GaspariCohn => gaspari_cohn(dist, half).max(0.0),
            Taper::Exponential => (-dist / half).exp(),
        }
    }
}

/// Domain decomposition into `blocks` contiguous index ranges with an
/// observation radius in grid units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSpec {
    pub blocks: usize,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub taper: Taper,
}

impl LocalizationSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.blocks == 0 || !dim.is_multiple_of(self.blocks) {
            return Err(Error::InvalidConfig(format!(
                "number of subdomains {} must divide the state dimension {dim}",
                self.blocks
            )));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::InvalidConfig(format!("localization radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn partition(&self, dim: usize) -> Vec<Range<usize>> {
        let size = dim / self.blocks;
        (0..self.blocks).map(|b| b * size..(b + 1) * size).collect()
    }
}

/// Grid coordinates of state index `i`: row-major on a square grid when
/// `dim` is a perfect square, the line otherwise.
pub fn grid_coordinates(i: usize, dim: usize) -> (f64, f64) {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side == dim {
        ((i / side) as f64, (i % side) as f64)
    } else {
        (i as f64, 0.0)
    }
}

fn block_distance(block: &Range<usize>, obs_coord: (f64, f64), dim: usize) -> f64 {
    block
        .clone()
        .map(|i| {
            let (a, b) = grid_coordinates(i, dim);
            (a - obs_coord.0).hypot(b - obs_coord.1)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Observations used by `block`: `(observation row, taper weight)`.
pub fn local_observations(model: &LinearModel, loc: &LocalizationSpec, block: &Range<usize>) -> Vec<(usize, f64)> {
    let dim = model.dim();
    model
        .selector
        .indices
        .iter()
        .enumerate()
        .filter_map(|(r, &i)| {
            let w = match loc.radius {
                None => 1.0,
                Some(_) => loc.taper.weight(block_distance(block, grid_coordinates(i, dim), dim), loc.radius),
            };
            (w > 0.0).then_some((r, w))
        })
        .collect()
}

/// R-localized EnKF analysis with given standard-normal draws `e`.
/// Each block assimilates its local observations with variances
/// `σ_y²/w` and perturbations `σ_y e/√w`.
#[allow(clippy::too_many_arguments)]
pub fn lenkf_analysis(
    ens: &Ensemble,
    model: &LinearModel,
    y: &ObsVector,
    loc: &LocalizationSpec,
    e: &DMatrix<f64>,
    inflation: f64,
    solver: EnkfSolver,
    exec: Execution,
) -> Result<Ensemble> {
    check_obs(model, ens, y)?;
    loc.validate(model.dim())?;
    let n = ens.n_members();
    check_len("perturbation rows", y.len(), e.nrows())?;
    check_len("perturbation columns", n, e.ncols())?;
    let mean = ens.mean();
    let xp = inflated_anomalies(ens, inflation);
    let s_all = model.selector.apply_columns(&xp);
    let hx_mean = model.selector.apply(&mean);
    let sy = model.sigma_y;
    let blocks = loc.partition(model.dim());
    let updates = map_indexed(exec, blocks.len(), |b| -> Result<Option<DMatrix<f64>>> {
        let block = &blocks[b];
        let local = local_observations(model, loc, block);
        if local.is_empty() {
            return Ok(None);
        }
        let rows: Vec<usize> = local.iter().map(|(r, _)| *r).collect();
        let s = s_all.select_rows(rows.iter());
        let r_var = DVector::from_iterator(local.len(), local.iter().map(|(_, w)| sy * sy / w));
        let mut d = DMatrix::zeros(local.len(), n);
        for (lr, &(r, w)) in local.iter().enumerate() {
            let scale = sy / w.sqrt();
            for c in 0..n {
                d[(lr, c)] = y.values[r] + scale * e[(r, c)] - hx_mean[r] - s[(lr, c)];
            }
        }
        let z = innovation_solve(&s, &r_var, &d, solver)?;
        let xp_rows = xp.rows(block.start, block.len()).into_owned();
        Ok(Some(gain_times(&xp_rows, &s, &z)))
    });
    let mut xa = xp.clone();
    for (block, upd) in blocks.iter().zip(updates) {
        if let Some(inc) = upd? {
            let mut rows = xa.rows_mut(block.start, block.len());
            rows += inc;
        }
    }
    let out = Ensemble::from_parts(&mean, xa);
    if out.members.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("LEnKF analysis"));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn lenkf_step<R: Rng + ?Sized>(
    ens: &Ensemble,
    model: &LinearModel,
    y: &ObsVector,
    loc: &LocalizationSpec,
    inflation: f64,
    solver: EnkfSolver,
    exec: Execution,
    rng: &mut R,
) -> Result<Ensemble> {
    let e = draw_perturbations(y.len(), ens.n_members(), rng);
    lenkf_analysis(ens, model, y, loc, &e, inflation, solver, exec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMethod {
    Enkf,
    Etkf,
    Estkf,
    Lenkf,
}

impl EnsembleMethod {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleMethod::Enkf => "EnKF",
            EnsembleMethod::Etkf => "ETKF",
            EnsembleMethod::Estkf => "ESTKF",
            EnsembleMethod::Lenkf => "LEnKF",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub method: EnsembleMethod,
    pub members: usize,
    #[serde(default = "one")]
    pub inflation: f64,
    #[serde(default)]
    pub solver: EnkfSolver,
    #[serde(default)]
    pub localization: Option<LocalizationSpec>,
}

fn one() -> f64 {
    1.0
}

impl EnsembleConfig {
    pub fn new(method: EnsembleMethod, members: usize) -> Self {
        EnsembleConfig {
            method,
            members,
            inflation: 1.0,
            solver: EnkfSolver::Auto,
            localization: None,
        }
    }

    pub fn with_localization(mut self, loc: LocalizationSpec) -> Self {
        self.localization = Some(loc);
        self
    }
}

/// Runs a full ensemble filter from `z0` and returns the analysis means
/// for `k = 1..=n`.
pub fn run_ensemble_filter<R: Rng + ?Sized>(
    model: &LinearModel,
    z0: &DVector<f64>,
    observations: &[ObsVector],
    cfg: &EnsembleConfig,
    exec: Execution,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let loc = match (cfg.method, cfg.localization) {
        (EnsembleMethod::Lenkf, Some(l)) => Some(l),
        (EnsembleMethod::Lenkf, None) => {
            return Err(Error::InvalidConfig("LEnKF needs a localization spec".into()));
        }
        _ => None,
    };
    let mut ens = Ensemble::around(z0, cfg.members, model.sigma_z, rng)?;
    let mut means = Vec::with_capacity(observations.len());
    for y in observations {
        let f = forecast(&ens, model, rng)?;
        ens = match cfg.method {
            EnsembleMethod::Enkf => enkf_step(&f, model, y, cfg.inflation, cfg.solver, rng)?,
            EnsembleMethod::Etkf => etkf_step(&f, model, y, cfg.inflation)?,
            EnsembleMethod::Estkf => estkf_step(&f, model, y, cfg.inflation)?,
            EnsembleMethod::Lenkf => {
                let loc = loc.as_ref().expect("checked above");
                lenkf_step(&f, model, y, loc, cfg.inflation, cfg.solver, exec, rng)?
            }
        };
        means.push(ens.mean());
    }
    Ok(means)
}
