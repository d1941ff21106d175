//! Finite-volume rotating shallow-water solver with local Lax-Friedrichs fluxes.
//!
//! Conserved variables are `U = (η, ηu, ηv)` where `η` is the total water
//! column and `H` the bathymetry (positive downward), so the surface
//! elevation is `η - H`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::grid::{GridField, SwGrid};
use crate::error::{check_finite, check_len, Error, Result};
use crate::exec::{for_each_chunk_mut, Execution};

/// Earth's rotation rate (rad/s).
pub const OMEGA: f64 = 7.29e-5;
pub const EARTH_RADIUS: f64 = 6.371e6;
pub const GRAVITY: f64 = 9.81;

/// `f_0 = 2Ω sin ψ0` and `β = 2Ω cos ψ0 / R` for a reference latitude in degrees.
pub fn coriolis_from_latitude(psi0_deg: f64) -> (f64, f64) {
    let psi = psi0_deg.to_radians();
    (2.0 * OMEGA * psi.sin(), 2.0 * OMEGA * psi.cos() / EARTH_RADIUS)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwParams {
    pub g: f64,
    pub f0: f64,
    pub beta: f64,
    pub y0: f64,
    /// `H` at the nodes, column-major `N_y × N_x`.
    pub bathymetry: Vec<f64>,
}

impl SwParams {
    /// Coriolis parameter `f_1(y) = f_0 + β(y - y_0)`.
    pub fn coriolis(&self, y: f64) -> f64 {
        self.f0 + self.beta * (y - self.y0)
    }
}

/// Conserved state with ghost layers.
#[derive(Clone, Debug, PartialEq)]
pub struct SwState {
    pub eta: GridField,
    pub hu: GridField,
    pub hv: GridField,
}

impl SwState {
    pub fn from_primitive(grid: &SwGrid, eta: &[f64], u: &[f64], v: &[f64]) -> Result<Self> {
        let n = grid.cells();
        check_len("eta field", n, eta.len())?;
        check_len("u field", n, u.len())?;
        check_len("v field", n, v.len())?;
        check_finite(eta, "eta field")?;
        check_finite(u, "u field")?;
        check_finite(v, "v field")?;
        if let Some(p) = eta.iter().position(|h| *h <= 0.0) {
            return Err(Error::NonPositiveDepth {
                i: (p / grid.ny) as isize,
                j: (p % grid.ny) as isize,
                eta: eta[p],
            });
        }
        let hu: Vec<f64> = eta.iter().zip(u).map(|(h, u)| h * u).collect();
        let hv: Vec<f64> = eta.iter().zip(v).map(|(h, v)| h * v).collect();
        Ok(SwState {
            eta: GridField::from_interior(grid.nx, grid.ny, eta)?,
            hu: GridField::from_interior(grid.nx, grid.ny, &hu)?,
            hv: GridField::from_interior(grid.nx, grid.ny, &hv)?,
        })
    }

    /// From `Z = [η | u | v]`.
    pub fn from_vector(grid: &SwGrid, z: &DVector<f64>) -> Result<Self> {
        let n = grid.cells();
        check_len("shallow-water state vector", 3 * n, z.len())?;
        let s = z.as_slice();
        Self::from_primitive(grid, &s[..n], &s[n..2 * n], &s[2 * n..])
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let eta = self.eta.interior();
        let (u, v) = self.velocities();
        let mut out = Vec::with_capacity(3 * eta.len());
        out.extend_from_slice(&eta);
        out.extend_from_slice(&u);
        out.extend_from_slice(&v);
        DVector::from_vec(out)
    }

    /// Interior `(u, v)`, column-major.
    pub fn velocities(&self) -> (Vec<f64>, Vec<f64>) {
        let eta = self.eta.interior();
        let u = self.hu.interior().iter().zip(&eta).map(|(m, h)| m / h).collect();
        let v = self.hv.interior().iter().zip(&eta).map(|(m, h)| m / h).collect();
        (u, v)
    }

    pub fn total_mass(&self) -> f64 {
        self.eta.sum_interior()
    }
}

/// Primitive values on the four ghost edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeValues {
    /// `i = -1`, one value per row `j`.
    pub west: Vec<f64>,
    /// `i = N_x`.
    pub east: Vec<f64>,
    /// `j = -1`, one value per column `i`.
    pub south: Vec<f64>,
    /// `j = N_y`.
    pub north: Vec<f64>,
}

impl EdgeValues {
    fn lerp(&self, other: &EdgeValues, a: f64) -> EdgeValues {
        let mix = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(p, q)| p + a * (q - p)).collect();
        EdgeValues {
            west: mix(&self.west, &other.west),
            east: mix(&self.east, &other.east),
            south: mix(&self.south, &other.south),
            north: mix(&self.north, &other.north),
        }
    }

    fn from_interior(grid: &SwGrid, field: &[f64]) -> EdgeValues {
        let at = |i: usize, j: usize| field[grid.flat(i, j)];
        EdgeValues {
            west: (0..grid.ny).map(|j| at(0, j)).collect(),
            east: (0..grid.ny).map(|j| at(grid.nx - 1, j)).collect(),
            south: (0..grid.nx).map(|i| at(i, 0)).collect(),
            north: (0..grid.nx).map(|i| at(i, grid.ny - 1)).collect(),
        }
    }

    fn check(&self, grid: &SwGrid) -> Result<()> {
        check_len("west edge", grid.ny, self.west.len())?;
        check_len("east edge", grid.ny, self.east.len())?;
        check_len("south edge", grid.nx, self.south.len())?;
        check_len("north edge", grid.nx, self.north.len())?;
        for e in [&self.west, &self.east, &self.south, &self.north] {
            check_finite(e, "boundary forcing")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFrame {
    pub t: f64,
    pub eta: EdgeValues,
    pub u: EdgeValues,
    pub v: EdgeValues,
}

/// Time-stamped Dirichlet edge values, linearly interpolated in time.
/// A single frame is held constant for all times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryForcing {
    frames: Vec<BoundaryFrame>,
}

impl BoundaryForcing {
    pub fn new(grid: &SwGrid, frames: Vec<BoundaryFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidConfig("boundary forcing needs at least one frame".into()));
        }
        if frames.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidConfig("boundary frames must have increasing times".into()));
        }
        for f in &frames {
            f.eta.check(grid)?;
            f.u.check(grid)?;
            f.v.check(grid)?;
            if f.eta.west.iter().chain(&f.eta.east).chain(&f.eta.south).chain(&f.eta.north).any(|h| *h <= 0.0) {
                return Err(Error::InvalidConfig("boundary depth must be positive".into()));
            }
        }
        Ok(BoundaryForcing { frames })
    }

    /// Holds the edge cells of `state` fixed for all time.
    pub fn constant_from_state(grid: &SwGrid, z: &DVector<f64>) -> Result<Self> {
        let n = grid.cells();
        check_len("shallow-water state vector", 3 * n, z.len())?;
        let s = z.as_slice();
        let frame = BoundaryFrame {
            t: 0.0,
            eta: EdgeValues::from_interior(grid, &s[..n]),
            u: EdgeValues::from_interior(grid, &s[n..2 * n]),
            v: EdgeValues::from_interior(grid, &s[2 * n..]),
        };
        Self::new(grid, vec![frame])
    }

    pub fn frames(&self) -> &[BoundaryFrame] {
        &self.frames
    }

    pub fn at(&self, t: f64) -> Result<BoundaryFrame> {
        if self.frames.len() == 1 {
            return Ok(self.frames[0].clone());
        }
        let first = self.frames[0].t;
        let last = self.frames[self.frames.len() - 1].t;
        let slack = 1e-9 * (last - first).abs().max(1.0);
        if !(t >= first - slack && t <= last + slack) {
            return Err(Error::ForcingOutOfRange { t });
        }
        let t = t.clamp(first, last);
        let k = self.frames.partition_point(|f| f.t <= t).clamp(1, self.frames.len() - 1);
        let (a, b) = (&self.frames[k - 1], &self.frames[k]);
        let w = (t - a.t) / (b.t - a.t);
        Ok(BoundaryFrame {
            t,
            eta: a.eta.lerp(&b.eta, w),
            u: a.u.lerp(&b.u, w),
            v: a.v.lerp(&b.v, w),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet(BoundaryForcing),
    /// Doubly periodic; used for conservation checks.
    Periodic,
    /// Zero-gradient outflow.
    Transmissive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Two-stage Runge-Kutta (Heun).
    #[default]
    Heun,
    /// Single forward-Euler stage.
    Euler,
}

/// Solver with bathymetry gradients and Coriolis rows precomputed.
#[derive(Clone, Debug)]
pub struct SwSolver {
    grid: SwGrid,
    params: SwParams,
    bc: BoundaryCondition,
    integrator: Integrator,
    exec: Execution,
    dhdx: Vec<f64>,
    dhdy: Vec<f64>,
    coriolis: Vec<f64>,
}

#[inline]
fn flux_x(g: f64, l: [f64; 3], r: [f64; 3]) -> [f64; 3] {
    let (ul, vl) = (l[1] / l[0], l[2] / l[0]);
    let (ur, vr) = (r[1] / r[0], r[2] / r[0]);
    let lam = (ul.abs() + (g * l[0]).sqrt()).max(ur.abs() + (g * r[0]).sqrt());
    let fl = [l[1], l[1] * ul + 0.5 * g * l[0] * l[0], l[1] * vl];
    let fr = [r[1], r[1] * ur + 0.5 * g * r[0] * r[0], r[1] * vr];
    [
        0.5 * (fl[0] + fr[0]) - 0.5 * lam * (r[0] - l[0]),
        0.5 * (fl[1] + fr[1]) - 0.5 * lam * (r[1] - l[1]),
        0.5 * (fl[2] + fr[2]) - 0.5 * lam * (r[2] - l[2]),
    ]
}

#[inline]
fn flux_y(g: f64, l: [f64; 3], r: [f64; 3]) -> [f64; 3] {
    let (ul, vl) = (l[1] / l[0], l[2] / l[0]);
    let (ur, vr) = (r[1] / r[0], r[2] / r[0]);
    let lam = (vl.abs() + (g * l[0]).sqrt()).max(vr.abs() + (g * r[0]).sqrt());
    let fl = [l[2], l[2] * ul, l[2] * vl + 0.5 * g * l[0] * l[0]];
    let fr = [r[2], r[2] * ur, r[2] * vr + 0.5 * g * r[0] * r[0]];
    [
        0.5 * (fl[0] + fr[0]) - 0.5 * lam * (r[0] - l[0]),
        0.5 * (fl[1] + fr[1]) - 0.5 * lam * (r[1] - l[1]),
        0.5 * (fl[2] + fr[2]) - 0.5 * lam * (r[2] - l[2]),
    ]
}

fn gradient(values: &[f64], n: usize, stride: usize, h: f64, k: usize) -> f64 {
    // `k` indexes along the differentiated direction; `stride` steps one node along it.
    if n < 2 {
        return 0.0;
    }
    let at = |m: usize| values[m * stride];
    if k == 0 {
        (at(1) - at(0)) / h
    } else if k == n - 1 {
        (at(n - 1) - at(n - 2)) / h
    } else {
        (at(k + 1) - at(k - 1)) / (2.0 * h)
    }
}

impl SwSolver {
    pub fn new(grid: SwGrid, params: SwParams, bc: BoundaryCondition, integrator: Integrator) -> Result<Self> {
        grid.validate()?;
        check_len("bathymetry", grid.cells(), params.bathymetry.len())?;
        check_finite(&params.bathymetry, "bathymetry")?;
        if !(params.g.is_finite() && params.g > 0.0) {
            return Err(Error::InvalidConfig("gravity must be positive".into()));
        }
        let (nx, ny) = (grid.nx, grid.ny);
        let h = &params.bathymetry;
        let mut dhdx = vec![0.0; grid.cells()];
        let mut dhdy = vec![0.0; grid.cells()];
        for i in 0..nx {
            for j in 0..ny {
                dhdx[grid.flat(i, j)] = gradient(&h[j..], nx, ny, grid.dx(), i);
                dhdy[grid.flat(i, j)] = gradient(&h[i * ny..], ny, 1, grid.dy(), j);
            }
        }
        let coriolis = (0..ny).map(|j| params.coriolis(grid.y(j))).collect();
        Ok(SwSolver {
            grid,
            params,
            bc,
            integrator,
            exec: Execution::Sequential,
            dhdx,
            dhdy,
            coriolis,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn grid(&self) -> &SwGrid {
        &self.grid
    }

    pub fn params(&self) -> &SwParams {
        &self.params
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.bc
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    fn fill_ghosts(&self, s: &mut SwState, t: f64) -> Result<()> {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        match &self.bc {
            BoundaryCondition::Dirichlet(forcing) => {
                let fr = forcing.at(t)?;
                let mut put = |i: isize, j: isize, h: f64, u: f64, v: f64| {
                    s.eta.set(i, j, h);
                    s.hu.set(i, j, h * u);
                    s.hv.set(i, j, h * v);
                };
                for j in 0..ny as usize {
                    put(-1, j as isize, fr.eta.west[j], fr.u.west[j], fr.v.west[j]);
                    put(nx, j as isize, fr.eta.east[j], fr.u.east[j], fr.v.east[j]);
                }
                for i in 0..nx as usize {
                    put(i as isize, -1, fr.eta.south[i], fr.u.south[i], fr.v.south[i]);
                    put(i as isize, ny, fr.eta.north[i], fr.u.north[i], fr.v.north[i]);
                }
            }
            BoundaryCondition::Periodic | BoundaryCondition::Transmissive => {
                let periodic = matches!(self.bc, BoundaryCondition::Periodic);
                for f in [&mut s.eta, &mut s.hu, &mut s.hv] {
                    for j in 0..ny {
                        let (w, e) = if periodic { (nx - 1, 0) } else { (0, nx - 1) };
                        f.set(-1, j, f.get(w, j));
                        f.set(nx, j, f.get(e, j));
                    }
                    for i in 0..nx {
                        let (so, no) = if periodic { (ny - 1, 0) } else { (0, ny - 1) };
                        f.set(i, -1, f.get(i, so));
                        f.set(i, ny, f.get(i, no));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_state(&self, s: &SwState, tau: f64) -> Result<()> {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        let g = self.params.g;
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        for i in -1..=nx {
            for j in -1..=ny {
                let corner = (i == -1 || i == nx) && (j == -1 || j == ny);
                if corner {
                    continue;
                }
                let h = s.eta.get(i, j);
                let (hu, hv) = (s.hu.get(i, j), s.hv.get(i, j));
                if !(h.is_finite() && hu.is_finite() && hv.is_finite()) {
                    return Err(Error::NonFinite("shallow-water state"));
                }
                if h <= 0.0 {
                    return Err(Error::NonPositiveDepth { i, j, eta: h });
                }
                let interior = i >= 0 && i < nx && j >= 0 && j < ny;
                if interior {
                    let c = (g * h).sqrt();
                    let courant = tau * (((hu / h).abs() + c) / dx + ((hv / h).abs() + c) / dy);
                    if courant >= 1.0 {
                        return Err(Error::Cfl { i, j, courant });
                    }
                }
            }
        }
        Ok(())
    }

    /// Right-hand side `-(A*)_x - (B*)_y + C + D` for every interior cell,
    /// laid out as `[(i * N_y + j) * 3 + component]`. Ghosts must be filled.
    fn residual(&self, s: &SwState) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (dx, dy) = (self.grid.dx(), self.grid.dy());
        let g = self.params.g;
        let mut out = vec![0.0; 3 * nx * ny];
        let cell = |i: isize, j: isize| [s.eta.get(i, j), s.hu.get(i, j), s.hv.get(i, j)];
        for_each_chunk_mut(self.exec, &mut out, 3 * ny, |i, col| {
            let i = i as isize;
            for j in 0..ny as isize {
                let c = cell(i, j);
                let fe = flux_x(g, c, cell(i + 1, j));
                let fw = flux_x(g, cell(i - 1, j), c);
                let fn_ = flux_y(g, c, cell(i, j + 1));
                let fs = flux_y(g, cell(i, j - 1), c);
                let k = self.grid.flat(i as usize, j as usize);
                let f = self.coriolis[j as usize];
                let src = [
                    0.0,
                    g * c[0] * self.dhdx[k] + f * c[2],
                    g * c[0] * self.dhdy[k] - f * c[1],
                ];
                for m in 0..3 {
                    col[3 * j as usize + m] = -(fe[m] - fw[m]) / dx - (fn_[m] - fs[m]) / dy + src[m];
                }
            }
        });
        out
    }

    fn euler_stage(&self, base: &SwState, from: &mut SwState, t: f64, tau: f64) -> Result<SwState> {
        self.fill_ghosts(from, t)?;
        self.check_state(from, tau)?;
        let r = self.residual(from);
        let mut next = base.clone();
        let ny = self.grid.ny;
        for i in 0..self.grid.nx {
            for j in 0..ny {
                let k = 3 * (i * ny + j);
                let (ii, jj) = (i as isize, j as isize);
                next.eta.set(ii, jj, from.eta.get(ii, jj) + tau * r[k]);
                next.hu.set(ii, jj, from.hu.get(ii, jj) + tau * r[k + 1]);
                next.hv.set(ii, jj, from.hv.get(ii, jj) + tau * r[k + 2]);
            }
        }
        Ok(next)
    }

    /// One explicit step of size `tau` starting at time `t`.
    pub fn step(&self, state: &SwState, t: f64, tau: f64) -> Result<SwState> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {tau}")));
        }
        let mut u0 = state.clone();
        let u1 = self.euler_stage(state, &mut u0, t, tau)?;
        match self.integrator {
            Integrator::Euler => Ok(u1),
            Integrator::Heun => {
                let mut u1 = u1;
                let u2 = self.euler_stage(state, &mut u1, t + tau, tau)?;
                let mut out = u0;
                for (o, (a, b)) in [
                    (&mut out.eta, (&state.eta, &u2.eta)),
                    (&mut out.hu, (&state.hu, &u2.hu)),
                    (&mut out.hv, (&state.hv, &u2.hv)),
                ] {
                    for i in 0..self.grid.nx as isize {
                        for j in 0..self.grid.ny as isize {
                            o.set(i, j, 0.5 * (a.get(i, j) + b.get(i, j)));
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// `L` steps of size `(t_end - t_start)/L`; `observer` sees the state
    /// and time before every inner step.
    pub fn flow_observed<F>(&self, state: &SwState, t_start: f64, t_end: f64, l: usize, mut observer: F) -> Result<SwState>
    where
        F: FnMut(&SwState, f64),
    {
        if l == 0 {
            return Err(Error::InvalidConfig("inner steps L must be >= 1".into()));
        }
        let tau = (t_end - t_start) / l as f64;
        let mut cur = state.clone();
        for s in 0..l {
            let t = t_start + s as f64 * tau;
            observer(&cur, t);
            cur = self.step(&cur, t, tau)?;
        }
        Ok(cur)
    }

    pub fn flow(&self, state: &SwState, t_start: f64, t_end: f64, l: usize) -> Result<SwState> {
        self.flow_observed(state, t_start, t_end, l, |_, _| {})
    }
}

pub fn sw_step(
    state: &SwState,
    params: &SwParams,
    grid: &SwGrid,
    bc: &BoundaryCondition,
    t: f64,
    tau: f64,
) -> Result<SwState> {
    SwSolver::new(*grid, params.clone(), bc.clone(), Integrator::Heun)?.step(state, t, tau)
}

pub fn sw_flow(
    state: &SwState,
    params: &SwParams,
    grid: &SwGrid,
    bc: &BoundaryCondition,
    t_start: f64,
    t_end: f64,
    l: usize,
) -> Result<SwState> {
    SwSolver::new(*grid, params.clone(), bc.clone(), Integrator::Heun)?.flow(state, t_start, t_end, l)
}
