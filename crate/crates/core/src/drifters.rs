//! Drifter kinematics, nearest-node observation selection and the
//! Lagrangian observation operator.
//!
//! Observation vectors are drifter-major `(u, v)` pairs in ascending id
//! order: `[u_1, v_1, u_2, v_2, ...]`.

use std::path::Path;

use log::warn;
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::model::{ObsVector, ObservationModel, StateVector};
use crate::sw::grid::SwGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Drifter positions at one time, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct DrifterSet {
    pub ids: Vec<u32>,
    pub positions: Vec<Position>,
    pub t: f64,
}

impl DrifterSet {
    pub fn new(mut drifters: Vec<(u32, Position)>, t: f64) -> Result<Self> {
        drifters.sort_by_key(|(id, _)| *id);
        if drifters.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig("duplicate drifter id".into()));
        }
        for (_, p) in &drifters {
            check_finite(&[p.x, p.y], "drifter position")?;
        }
        Ok(DrifterSet {
            ids: drifters.iter().map(|d| d.0).collect(),
            positions: drifters.iter().map(|d| d.1).collect(),
            t,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// How advection reads the velocity between nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocitySampling {
    #[default]
    Bilinear,
    Nearest,
}

/// Clamps to the closed domain; the flag reports whether anything moved.
pub fn clamp_to_domain(grid: &SwGrid, p: Position) -> (Position, bool) {
    let c = Position {
        x: p.x.clamp(grid.x_min, grid.x_max),
        y: p.y.clamp(grid.y_min, grid.y_max),
    };
    (c, c != p)
}

/// Lower node index of the interpolation cell and the fractional offset.
fn locate(coord: f64, min: f64, delta: f64, n: usize) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let f = ((coord - min) / delta).clamp(0.0, (n - 1) as f64);
    let i0 = (f.floor() as usize).min(n - 2);
    (i0, f - i0 as f64)
}

/// Bilinear interpolation of a column-major node field.
pub fn interpolate(grid: &SwGrid, field: &[f64], p: Position) -> f64 {
    let (i0, a) = locate(p.x, grid.x_min, grid.dx(), grid.nx);
    let (j0, b) = locate(p.y, grid.y_min, grid.dy(), grid.ny);
    let i1 = (i0 + 1).min(grid.nx - 1);
    let j1 = (j0 + 1).min(grid.ny - 1);
    let at = |i: usize, j: usize| field[grid.flat(i, j)];
    let lo = at(i0, j0) + a * (at(i1, j0) - at(i0, j0));
    let hi = at(i0, j1) + a * (at(i1, j1) - at(i0, j1));
    lo + b * (hi - lo)
}

/// Nearest of the (up to) four nodes surrounding `p`; ties go to the
/// smallest `(i, j)`.
pub fn nearest_node(grid: &SwGrid, p: Position) -> (usize, usize) {
    let (i0, _) = locate(p.x, grid.x_min, grid.dx(), grid.nx);
    let (j0, _) = locate(p.y, grid.y_min, grid.dy(), grid.ny);
    let mut best = (i0, j0);
    let mut best_d = f64::INFINITY;
    for i in i0..=(i0 + 1).min(grid.nx - 1) {
        for j in j0..=(j0 + 1).min(grid.ny - 1) {
            let (ex, ey) = (p.x - grid.x(i), p.y - grid.y(j));
            let d = ex * ex + ey * ey;
            if d < best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    best
}

/// Velocity `(u, v)` at `p` from column-major node fields.
pub fn sample_velocity(grid: &SwGrid, u: &[f64], v: &[f64], p: Position, mode: VelocitySampling) -> (f64, f64) {
    match mode {
        VelocitySampling::Bilinear => (interpolate(grid, u, p), interpolate(grid, v, p)),
        VelocitySampling::Nearest => {
            let (i, j) = nearest_node(grid, p);
            let k = grid.flat(i, j);
            (u[k], v[k])
        }
    }
}

/// One Euler increment `x <- x + h(x, Z) τ` for every position; returns the
/// number of positions that had to be clamped back into the domain.
pub fn euler_step(
    grid: &SwGrid,
    positions: &mut [Position],
    u: &[f64],
    v: &[f64],
    tau: f64,
    mode: VelocitySampling,
) -> usize {
    let mut clamped = 0;
    for p in positions.iter_mut() {
        let (vx, vy) = sample_velocity(grid, u, v, *p, mode);
        let (next, hit) = clamp_to_domain(grid, Position::new(p.x + vx * tau, p.y + vy * tau));
        clamped += hit as usize;
        *p = next;
    }
    clamped
}

/// `L = velocities.len()` Euler steps, one per inner velocity field `(u, v)`.
pub fn advect_drifters(
    drifters: &DrifterSet,
    velocities: &[(Vec<f64>, Vec<f64>)],
    grid: &SwGrid,
    tau: f64,
    mode: VelocitySampling,
) -> Result<DrifterSet> {
    let mut out = drifters.clone();
    let mut clamped = 0;
    for (u, v) in velocities {
        check_len("u field", grid.cells(), u.len())?;
        check_len("v field", grid.cells(), v.len())?;
        clamped += euler_step(grid, &mut out.positions, u, v, tau, mode);
    }
    if clamped > 0 {
        warn!("{clamped} drifter positions clamped to the domain boundary");
    }
    out.t += tau * velocities.len() as f64;
    Ok(out)
}

/// Observed node and state-vector indices per drifter.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsSelection {
    pub nodes: Vec<(usize, usize)>,
    pub u_index: Vec<usize>,
    pub v_index: Vec<usize>,
    pub state_dim: usize,
}

impl ObsSelection {
    pub fn obs_dim(&self) -> usize {
        2 * self.nodes.len()
    }
}

pub fn select_observed_indices(positions: &[Position], grid: &SwGrid) -> ObsSelection {
    let n = grid.cells();
    let nodes: Vec<_> = positions.iter().map(|p| nearest_node(grid, *p)).collect();
    ObsSelection {
        u_index: nodes.iter().map(|&(i, j)| n + grid.flat(i, j)).collect(),
        v_index: nodes.iter().map(|&(i, j)| 2 * n + grid.flat(i, j)).collect(),
        nodes,
        state_dim: 3 * n,
    }
}

/// Observation noise scale: one `σ_y`, or one per drifter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObsNoise {
    Scalar(f64),
    PerDrifter(Vec<f64>),
}

impl ObsNoise {
    pub fn sigma(&self, drifter: usize) -> f64 {
        match self {
            ObsNoise::Scalar(s) => *s,
            ObsNoise::PerDrifter(v) => v[drifter],
        }
    }

    /// Representative scalar (the mean for per-drifter noise).
    pub fn mean_sigma(&self) -> f64 {
        match self {
            ObsNoise::Scalar(s) => *s,
            ObsNoise::PerDrifter(v) => v.iter().sum::<f64>() / v.len().max(1) as f64,
        }
    }

    fn validate(&self, n_drifters: usize, allow_zero: bool) -> Result<()> {
        let ok = |s: f64| s.is_finite() && (s > 0.0 || (allow_zero && s == 0.0));
        match self {
            ObsNoise::Scalar(s) if ok(*s) => Ok(()),
            ObsNoise::PerDrifter(v) if v.len() == n_drifters && v.iter().all(|s| ok(*s)) => Ok(()),
            _ => Err(Error::InvalidConfig(format!("invalid observation noise {self:?} for {n_drifters} drifters"))),
        }
    }
}

/// Gathers `(u, v)` at the selected nodes; adds `N(0, σ²)` noise when an rng is given.
pub fn observe<R: Rng + ?Sized>(
    state: &StateVector,
    sel: &ObsSelection,
    noise: &ObsNoise,
    rng: Option<&mut R>,
) -> Result<DVector<f64>> {
    check_len("state for observation", sel.state_dim, state.len())?;
    let mut y = DVector::zeros(sel.obs_dim());
    for (d, (&iu, &iv)) in sel.u_index.iter().zip(&sel.v_index).enumerate() {
        for (slot, idx) in [(2 * d, iu), (2 * d + 1, iv)] {
            y[slot] = *state.get(idx).ok_or(Error::IndexOutOfBounds { index: idx, len: state.len() })?;
        }
    }
    if let Some(rng) = rng {
        noise.validate(sel.nodes.len(), true)?;
        for d in 0..sel.nodes.len() {
            let s = noise.sigma(d);
            for slot in [2 * d, 2 * d + 1] {
                let z: f64 = rng.sample(StandardNormal);
                y[slot] += s * z;
            }
        }
    }
    Ok(y)
}

/// Isotropic Gaussian log-likelihood, constant dropped.
pub fn likelihood_known(state: &StateVector, y: &DVector<f64>, sel: &ObsSelection, noise: &ObsNoise) -> Result<f64> {
    check_len("drifter observation", sel.obs_dim(), y.len())?;
    check_finite(y.as_slice(), "drifter observation")?;
    check_finite(state.as_slice(), "state")?;
    let pred = observe::<crate::rng::SimRng>(state, sel, noise, None)?;
    let mut ll = 0.0;
    for d in 0..sel.nodes.len() {
        let s2 = noise.sigma(d).powi(2);
        for slot in [2 * d, 2 * d + 1] {
            let r = y[slot] - pred[slot];
            ll -= 0.5 * r * r / s2;
        }
    }
    Ok(ll)
}

/// Likelihood `G` with the selection recomputed from predicted positions.
pub fn likelihood_unknown(
    state: &StateVector,
    y: &DVector<f64>,
    xbar: &[Position],
    grid: &SwGrid,
    noise: &ObsNoise,
) -> Result<f64> {
    likelihood_known(state, y, &select_observed_indices(xbar, grid), noise)
}

/// Drifter observation model. Holds the observer positions per observation
/// index (`tracks[k]`, `k = 0..=n`) when they are known; callers can always
/// pass positions explicitly instead.
#[derive(Clone, Debug)]
pub struct DrifterObservation {
    grid: SwGrid,
    noise: ObsNoise,
    n_drifters: usize,
    tracks: Option<Vec<Vec<Position>>>,
}

impl DrifterObservation {
    pub fn new(grid: SwGrid, noise: ObsNoise, n_drifters: usize, tracks: Option<Vec<Vec<Position>>>) -> Result<Self> {
        noise.validate(n_drifters, true)?;
        if let Some(t) = &tracks {
            for p in t {
                check_len("drifter track", n_drifters, p.len())?;
            }
        }
        Ok(DrifterObservation {
            grid,
            noise,
            n_drifters,
            tracks,
        })
    }

    pub fn noise(&self) -> &ObsNoise {
        &self.noise
    }

    pub fn grid(&self) -> &SwGrid {
        &self.grid
    }

    pub fn tracks(&self) -> Option<&[Vec<Position>]> {
        self.tracks.as_deref()
    }

    pub fn with_tracks(mut self, tracks: Vec<Vec<Position>>) -> Result<Self> {
        for p in &tracks {
            check_len("drifter track", self.n_drifters, p.len())?;
        }
        self.tracks = Some(tracks);
        Ok(self)
    }

    fn positions<'a>(&'a self, k: usize, locations: Option<&'a [Position]>) -> Result<&'a [Position]> {
        match (locations, &self.tracks) {
            (Some(p), _) => {
                check_len("drifter locations", self.n_drifters, p.len())?;
                Ok(p)
            }
            (None, Some(t)) => t
                .get(k)
                .map(Vec::as_slice)
                .ok_or(Error::IndexOutOfBounds { index: k, len: t.len() }),
            (None, None) => Err(Error::InvalidConfig("drifter locations are unknown and none were supplied".into())),
        }
    }
}

impl ObservationModel for DrifterObservation {
    fn obs_dim(&self) -> usize {
        2 * self.n_drifters
    }

    fn log_likelihood(&self, state: &StateVector, y: &ObsVector, locations: Option<&[Position]>) -> Result<f64> {
        let pos = self.positions(y.k, locations)?;
        likelihood_known(state, &y.values, &select_observed_indices(pos, &self.grid), &self.noise)
    }

    fn observe<R: Rng + ?Sized>(
        &self,
        state: &StateVector,
        k: usize,
        locations: Option<&[Position]>,
        rng: &mut R,
    ) -> Result<ObsVector> {
        let pos = self.positions(k, locations)?;
        let sel = select_observed_indices(pos, &self.grid);
        Ok(ObsVector::new(k, observe(state, &sel, &self.noise, Some(rng))?))
    }
}

/// One row of the drifter fixture CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrifterRecord {
    pub id: u32,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub u_obs: f64,
    pub v_obs: f64,
}

pub fn write_drifter_csv(path: &Path, records: &[DrifterRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_drifter_csv(path: &Path) -> Result<Vec<DrifterRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let records = rdr.deserialize().collect::<std::result::Result<Vec<DrifterRecord>, _>>()?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> SwGrid {
        SwGrid::uniform(10, 8, 1000.0).unwrap()
    }

    fn const_fields(g: &SwGrid, u: f64, v: f64) -> (Vec<f64>, Vec<f64>) {
        (vec![u; g.cells()], vec![v; g.cells()])
    }

    #[test]
    fn node_and_center_selection() {
        let g = grid();
        assert_eq!(nearest_node(&g, Position::new(3000.0, 5000.0)), (3, 5));
        assert_eq!(nearest_node(&g, Position::new(3500.0, 5500.0)), (3, 5));
        assert_eq!(nearest_node(&g, Position::new(3501.0, 5500.0)), (4, 5));
    }

    #[test]
    fn zero_and_constant_velocity() {
        let g = grid();
        let set = DrifterSet::new(vec![(2, Position::new(4000.0, 4000.0)), (1, Position::new(2500.0, 3000.0))], 0.0).unwrap();
        assert_eq!(set.ids, vec![1, 2]);
        let zero = vec![const_fields(&g, 0.0, 0.0); 10];
        assert_eq!(advect_drifters(&set, &zero, &g, 60.0, VelocitySampling::Bilinear).unwrap().positions, set.positions);
        let cst = vec![const_fields(&g, 0.5, -0.5); 10];
        let moved = advect_drifters(&set, &cst, &g, 60.0, VelocitySampling::Bilinear).unwrap();
        for (a, b) in moved.positions.iter().zip(&set.positions) {
            assert_relative_eq!(a.x - b.x, 300.0, epsilon = 1e-9);
            assert_relative_eq!(a.y - b.y, -300.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn euler_on_linear_field_is_first_order() {
        let g = SwGrid::uniform(50, 4, 1000.0).unwrap();
        let a = 1e-5;
        let tau = 600.0;
        let u: Vec<f64> = (0..g.cells()).map(|k| a * g.x(k / g.ny)).collect();
        let v = vec![0.0; g.cells()];
        let x0 = 5000.0;
        let steps = 100;
        let fields = vec![(u, v); steps];
        let set = DrifterSet::new(vec![(0, Position::new(x0, 1000.0))], 0.0).unwrap();
        let out = advect_drifters(&set, &fields, &g, tau, VelocitySampling::Bilinear).unwrap();
        let t = tau * steps as f64;
        let exact = (a * t).exp() * x0;
        assert!((out.positions[0].x - exact).abs() < 2.0 * a * a * t * tau * x0);
    }

    #[test]
    fn observation_ordering_and_noise_free() {
        let g = grid();
        let n = g.cells();
        let mut z = DVector::zeros(3 * n);
        z.rows_mut(n, n).fill(1.0);
        z.rows_mut(2 * n, n).fill(2.0);
        let sel = select_observed_indices(&[Position::new(0.0, 0.0), Position::new(5000.0, 2000.0)], &g);
        let y = observe::<crate::rng::SimRng>(&z, &sel, &ObsNoise::Scalar(0.1), None).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 1.0, 2.0]);
        let y0 = observe(&z, &sel, &ObsNoise::Scalar(0.0), Some(&mut seeded(1, 0))).unwrap();
        assert_eq!(y0, y);
    }

    #[test]
    fn observation_noise_variance() {
        let g = grid();
        let z = DVector::zeros(3 * g.cells());
        let sel = select_observed_indices(&[Position::new(1000.0, 1000.0)], &g);
        let mut rng = seeded(2, 0);
        let sigma = 0.3;
        let n = 10_000;
        let mut ss = 0.0;
        for _ in 0..n {
            let y = observe(&z, &sel, &ObsNoise::Scalar(sigma), Some(&mut rng)).unwrap();
            ss += y.norm_squared();
        }
        let var = ss / (2 * n) as f64;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn likelihood_values() {
        let g = grid();
        let mut rng = seeded(3, 0);
        let z = DVector::from_fn(3 * g.cells(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let pos = vec![Position::new(1200.0, 3400.0), Position::new(8100.0, 200.0)];
        let sel = select_observed_indices(&pos, &g);
        let noise = ObsNoise::Scalar(0.2);
        let y = observe::<crate::rng::SimRng>(&z, &sel, &noise, None).unwrap();
        assert_eq!(likelihood_known(&z, &y, &sel, &noise).unwrap(), 0.0);
        let shifted = y.map(|v| v + 0.2);
        assert_relative_eq!(likelihood_known(&z, &shifted, &sel, &noise).unwrap(), -2.0, epsilon = 1e-12);
        // dense quadratic-form oracle with a per-drifter diagonal covariance
        let per = ObsNoise::PerDrifter(vec![0.1, 0.4]);
        let yr = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = &yr - &y;
        let prec = nalgebra::DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 100.0, 6.25, 6.25]));
        let dense = -0.5 * (r.transpose() * prec * &r)[(0, 0)];
        assert_relative_eq!(likelihood_known(&z, &yr, &sel, &per).unwrap(), dense, max_relative = 1e-10);
        assert_eq!(
            likelihood_unknown(&z, &yr, &pos, &g, &per).unwrap(),
            likelihood_known(&z, &yr, &sel, &per).unwrap()
        );
    }

    #[test]
    fn drifter_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("drifters.csv");
        let recs = vec![
            DrifterRecord { id: 1, t: 0.0, x: 1.5, y: 2.25, u_obs: 0.1, v_obs: -0.2 },
            DrifterRecord { id: 2, t: 3600.0, x: 1e5, y: 3.0e4, u_obs: 0.0, v_obs: 1.0 / 3.0 },
        ];
        write_drifter_csv(&path, &recs).unwrap();
        assert_eq!(read_drifter_csv(&path).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(x in 0.0f64..10_000.0, y in 0.0f64..8_000.0) {
            let g = grid();
            let p = Position::new(x, y);
            let (i, j) = nearest_node(&g, p);
            let d = |i: usize, j: usize| (p.x - g.x(i)).powi(2) + (p.y - g.y(j)).powi(2);
            let best = d(i, j);
            for a in 0..g.nx {
                for b in 0..g.ny {
                    prop_assert!(d(a, b) >= best);
                }
            }
            let inside = x <= g.x(g.nx - 1) && y <= g.y(g.ny - 1);
            if inside {
                prop_assert!((p.x - g.x(i)).abs() <= g.dx() / 2.0 + 1e-9);
                prop_assert!((p.y - g.y(j)).abs() <= g.dy() / 2.0 + 1e-9);
            }
        }

        #[test]
        fn selection_shifts_with_translation(x in 1000.0f64..7000.0, y in 1000.0f64..5000.0) {
            let g = grid();
            let a = nearest_node(&g, Position::new(x, y));
            let b = nearest_node(&g, Position::new(x + g.dx(), y + g.dy()));
            prop_assert_eq!((a.0 + 1, a.1 + 1), b);
            prop_assert_eq!(a, nearest_node(&g, Position::new(x, y)));
        }

        #[test]
        fn constant_fields_advect_exactly(u in -1.0f64..1.0, v in -1.0f64..1.0) {
            let g = SwGrid::uniform(10, 8, 1000.0).unwrap();
            let (uf, vf) = const_fields(&g, u, v);
            let mut p = [Position::new(5000.0, 4000.0)];
            euler_step(&g, &mut p, &uf, &vf, 60.0, VelocitySampling::Bilinear);
            prop_assert_eq!(p[0], Position::new(5000.0 + u * 60.0, 4000.0 + v * 60.0));
        }
    }
}
