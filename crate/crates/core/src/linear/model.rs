use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drifters::Position;
use crate::error::{check_finite, check_len, Error, Result};
use crate::model::{Dynamics, NoiseCovariance, ObsVector, ObservationModel, StateVector};

/// Transition matrix `A`.
#[derive(Clone, Debug, PartialEq)]
pub enum TransitionMatrix {
    ScaledIdentity { dim: usize, scale: f64 },
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        match self {
            TransitionMatrix::ScaledIdentity { dim, .. } => *dim,
            TransitionMatrix::Diagonal(d) => d.len(),
            TransitionMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            TransitionMatrix::ScaledIdentity { scale, .. } => z * *scale,
            TransitionMatrix::Diagonal(d) => d.component_mul(z),
            TransitionMatrix::Dense(m) => m * z,
        }
    }

    /// `A X` for a matrix of column states.
    pub fn apply_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            TransitionMatrix::ScaledIdentity { scale, .. } => x * *scale,
            TransitionMatrix::Diagonal(d) => {
                let mut out = x.clone();
                for (mut row, a) in out.row_iter_mut().zip(d.iter()) {
                    row *= *a;
                }
                out
            }
            TransitionMatrix::Dense(m) => m * x,
        }
    }

    pub fn diagonal(&self) -> Option<DVector<f64>> {
        match self {
            TransitionMatrix::ScaledIdentity { dim, scale } => Some(DVector::from_element(*dim, *scale)),
            TransitionMatrix::Diagonal(d) => Some(d.clone()),
            TransitionMatrix::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            TransitionMatrix::Dense(m) => m.clone(),
            other => DMatrix::from_diagonal(&other.diagonal().expect("diagonal variants")),
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        match self {
            TransitionMatrix::Dense(m) => m
                .complex_eigenvalues()
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max),
            other => other.diagonal().expect("diagonal variants").amax(),
        }
    }
}

/// Observation matrix `C` with one unit entry per row: row `i` observes
/// state coordinate `indices[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSelector {
    pub dim: usize,
    pub indices: Vec<usize>,
}

impl ObservationSelector {
    pub fn new(dim: usize, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::IndexOutOfBounds { index: bad, len: dim });
        }
        Ok(ObservationSelector { dim, indices })
    }

    /// `C_{i,j} = 1` iff `j = i r̂` (one-based), i.e. every `r̂`-th coordinate.
    pub fn every(dim: usize, r_hat: usize) -> Result<Self> {
        if r_hat == 0 {
            return Err(Error::InvalidConfig("observation frequency r_hat must be >= 1".into()));
        }
        Self::new(dim, (1..=dim / r_hat).map(|i| i * r_hat - 1).collect())
    }

    pub fn obs_dim(&self) -> usize {
        self.indices.len()
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| z[i]))
    }

    /// `C X` for a matrix of column states.
    pub fn apply_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.select_rows(self.indices.iter())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.indices.len(), self.dim);
        for (r, &i) in self.indices.iter().enumerate() {
            c[(r, i)] = 1.0;
        }
        c
    }

    pub fn is_observed(&self) -> Vec<bool> {
        let mut m = vec![false; self.dim];
        for &i in &self.indices {
            m[i] = true;
        }
        m
    }
}

/// `Z_{n+1} = A Z_n + σ_z W`, `Y = C Z + σ_y V`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub transition: TransitionMatrix,
    pub selector: ObservationSelector,
    pub sigma_z: f64,
    pub sigma_y: f64,
    noise: NoiseCovariance,
}

impl LinearModel {
    pub fn new(transition: TransitionMatrix, selector: ObservationSelector, sigma_z: f64, sigma_y: f64) -> Result<Self> {
        check_len("observation selector", transition.dim(), selector.dim)?;
        if let TransitionMatrix::Dense(m) = &transition {
            check_len("transition columns", m.nrows(), m.ncols())?;
        }
        let rho = transition.spectral_radius();
        if rho > 1.0 + 1e-12 {
            return Err(Error::InvalidConfig(format!("spectral radius of A is {rho} > 1")));
        }
        if !(sigma_z > 0.0 && sigma_y > 0.0) {
            return Err(Error::InvalidConfig("noise scales must be positive".into()));
        }
        Ok(LinearModel {
            noise: NoiseCovariance::isotropic(transition.dim(), sigma_z)?,
            transition,
            selector,
            sigma_z,
            sigma_y,
        })
    }

    /// `A = a I` with every `r̂`-th coordinate observed.
    pub fn scaled_identity(dim: usize, a: f64, sigma_z: f64, sigma_y: f64, r_hat: usize) -> Result<Self> {
        Self::new(
            TransitionMatrix::ScaledIdentity { dim, scale: a },
            ObservationSelector::every(dim, r_hat)?,
            sigma_z,
            sigma_y,
        )
    }

    pub fn dim(&self) -> usize {
        self.transition.dim()
    }
}

impl Dynamics for LinearModel {
    fn dim(&self) -> usize {
        self.transition.dim()
    }

    fn flow(&self, state: &StateVector, _k: usize) -> Result<StateVector> {
        check_len("linear state", self.dim(), state.len())?;
        Ok(self.transition.apply(state))
    }

    fn noise(&self) -> &NoiseCovariance {
        &self.noise
    }
}

impl ObservationModel for LinearModel {
    fn obs_dim(&self) -> usize {
        self.selector.obs_dim()
    }

    fn log_likelihood(&self, state: &StateVector, y: &ObsVector, _locations: Option<&[Position]>) -> Result<f64> {
        check_len("linear observation", self.obs_dim(), y.len())?;
        check_len("linear state", self.dim(), state.len())?;
        check_finite(y.values.as_slice(), "observation")?;
        let s2 = self.sigma_y * self.sigma_y;
        Ok(-0.5
            * self
                .selector
                .indices
                .iter()
                .zip(y.values.iter())
                .map(|(&i, y)| (y - state[i]).powi(2))
                .sum::<f64>()
            / s2)
    }

    fn observe<R: Rng + ?Sized>(
        &self,
        state: &StateVector,
        k: usize,
        _locations: Option<&[Position]>,
        rng: &mut R,
    ) -> Result<ObsVector> {
        let mut y = self.selector.apply(state);
        for v in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += self.sigma_y * e;
        }
        Ok(ObsVector::new(k, y))
    }
}

/// Rule for the known initial state `Z_0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum InitialRule {
    /// `Z_0^j ~ scale · U[0,1]` for every coordinate.
    Uniform { scale: f64 },
    /// `Z_0^j ~ scale · U[0,1]` for `j ≤ ⌊d/3⌋`, zero elsewhere.
    LeadingThird { scale: f64 },
    Zero,
}

impl InitialRule {
    pub fn draw<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> DVector<f64> {
        match *self {
            InitialRule::Uniform { scale } => DVector::from_fn(dim, |_, _| scale * rng.random::<f64>()),
            InitialRule::LeadingThird { scale } => {
                let lead = dim / 3;
                DVector::from_fn(dim, |j, _| if j < lead { scale * rng.random::<f64>() } else { 0.0 })
            }
            InitialRule::Zero => DVector::zeros(dim),
        }
    }
}
