use crate::drifters::{euler_step, Position, VelocitySampling};
use crate::error::{check_len, Error, Result};
use crate::model::{Dynamics, NoiseCovariance, StateLayout, StateVector, TimeGrid};
use crate::smcmc::LagrangianDynamics;

use super::noise::SineNoise;
use super::solver::{SwSolver, SwState};

/// Shallow-water flow over the observation grid with sine-mode forcing,
/// `Z_k = Φ(Z_{k-1}) + W_k`.
#[derive(Clone, Debug)]
pub struct SwModel {
    solver: SwSolver,
    times: TimeGrid,
    noise: NoiseCovariance,
    sampling: VelocitySampling,
}

impl SwModel {
    pub fn new(solver: SwSolver, times: TimeGrid, noise: SineNoise) -> Result<Self> {
        let grid = solver.grid();
        if noise.dim() != 3 * grid.cells() {
            return Err(Error::DimensionMismatch {
                what: "sine noise",
                expected: 3 * grid.cells(),
                got: noise.dim(),
            });
        }
        Ok(SwModel {
            solver,
            times,
            noise: NoiseCovariance::SineModes(noise),
            sampling: VelocitySampling::Bilinear,
        })
    }

    pub fn with_sampling(mut self, sampling: VelocitySampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn solver(&self) -> &SwSolver {
        &self.solver
    }

    pub fn times(&self) -> &TimeGrid {
        &self.times
    }

    pub fn layout(&self) -> StateLayout {
        let g = self.solver.grid();
        StateLayout::ShallowWater { nx: g.nx, ny: g.ny }
    }

    pub fn sine_noise(&self) -> &SineNoise {
        match &self.noise {
            NoiseCovariance::SineModes(s) => s,
            _ => unreachable!("shallow-water noise is always sine modes"),
        }
    }

    fn run(&self, z: &StateVector, k: usize, positions: Option<&mut [Position]>) -> Result<StateVector> {
        check_len("shallow-water state", self.dim(), z.len())?;
        if k == 0 || k > self.times.n_obs() {
            return Err(Error::IndexOutOfBounds {
                index: k,
                len: self.times.n_obs() + 1,
            });
        }
        let grid = *self.solver.grid();
        let state = SwState::from_vector(&grid, z)?;
        let (t0, t1) = (self.times.time(k - 1), self.times.time(k));
        let tau = self.times.tau(k);
        let out = match positions {
            None => self.solver.flow(&state, t0, t1, self.times.inner_steps())?,
            Some(pos) => self.solver.flow_observed(&state, t0, t1, self.times.inner_steps(), |s, _| {
                let (u, v) = s.velocities();
                euler_step(&grid, pos, &u, &v, tau, self.sampling);
            })?,
        };
        Ok(out.to_vector())
    }
}

impl Dynamics for SwModel {
    fn dim(&self) -> usize {
        3 * self.solver.grid().cells()
    }

    fn flow(&self, state: &StateVector, k: usize) -> Result<StateVector> {
        self.run(state, k, None)
    }

    fn noise(&self) -> &NoiseCovariance {
        &self.noise
    }
}

impl LagrangianDynamics for SwModel {
    fn advect_with_flow(&self, state: &StateVector, k: usize, positions: &mut [Position]) -> Result<StateVector> {
        self.run(state, k, Some(positions))
    }
}
