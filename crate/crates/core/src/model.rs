//! State-space model contracts shared by every filter.
//!
//! A model is a pair of a [`Dynamics`] (deterministic flow plus additive
//! Gaussian noise, so the transition density is Gaussian around the flow) and
//! an [`ObservationModel`]. Log-densities drop additive constants that do not
//! depend on the state; every consumer only compares them through ratios.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::drifters::Position;
use crate::error::{check_finite, check_len, Error, Result};
use crate::sw::noise::SineNoise;

/// Dense hidden state. Block structure, when there is one, is described by
/// the owning model's [`StateLayout`].
pub type StateVector = DVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateLayout {
    Generic { dim: usize },
    /// `[eta | u | v]`, each block column-major over `(row = y, column = x)`.
    ShallowWater { nx: usize, ny: usize },
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        match *self {
            StateLayout::Generic { dim } => dim,
            StateLayout::ShallowWater { nx, ny } => 3 * nx * ny,
        }
    }
}

/// Observation times `t_0 = 0 < t_1 < ... < t_n` with `L` inner steps per interval.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    inner_steps: usize,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, inner_steps: usize) -> Result<Self> {
        if inner_steps == 0 {
            return Err(Error::InvalidConfig("inner steps L must be >= 1".into()));
        }
        if times.first() != Some(&0.0) {
            return Err(Error::InvalidConfig("time grid must start at t_0 = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "observation times must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { times, inner_steps })
    }

    /// `n_obs` intervals of equal length `interval`.
    pub fn uniform(n_obs: usize, interval: f64, inner_steps: usize) -> Result<Self> {
        let times = (0..=n_obs).map(|k| k as f64 * interval).collect();
        Self::new(times, inner_steps)
    }

    pub fn n_obs(&self) -> usize {
        self.times.len() - 1
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Inner step size on `(t_{k-1}, t_k]`, for `k >= 1`.
    pub fn tau(&self, k: usize) -> f64 {
        (self.times[k] - self.times[k - 1]) / self.inner_steps as f64
    }
}

/// Observation vector at time index `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsVector {
    pub k: usize,
    pub values: DVector<f64>,
}

impl ObsVector {
    pub fn new(k: usize, values: DVector<f64>) -> Self {
        ObsVector { k, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Covariance of a zero-mean Gaussian noise term.
///
/// Factorizations are computed once at construction; evaluation cost is
/// `O(d)` for the diagonal case and `O(d^2)` for the dense case.
#[derive(Clone, Debug)]
pub enum NoiseCovariance {
    /// Independent coordinates with the given variances.
    Diagonal(DVector<f64>),
    /// Full covariance with its lower Cholesky factor.
    Dense {
        cov: DMatrix<f64>,
        factor: DMatrix<f64>,
    },
    /// Boundary-vanishing sine modes for the shallow-water fields.
    SineModes(SineNoise),
}

impl NoiseCovariance {
    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        Self::diagonal(DVector::from_element(dim, sigma * sigma))
    }

    pub fn diagonal(variances: DVector<f64>) -> Result<Self> {
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NotPositiveDefinite("diagonal variances"));
        }
        Ok(NoiseCovariance::Diagonal(variances))
    }

    pub fn dense(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::DimensionMismatch {
                what: "dense covariance",
                expected: cov.nrows(),
                got: cov.ncols(),
            });
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("dense covariance"))?;
        Ok(NoiseCovariance::Dense {
            factor: chol.l(),
            cov,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseCovariance::Diagonal(v) => v.len(),
            NoiseCovariance::Dense { cov, .. } => cov.nrows(),
            NoiseCovariance::SineModes(s) => s.dim(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            NoiseCovariance::Diagonal(var) => {
                DVector::from_iterator(var.len(), var.iter().map(|v| {
                    let z: f64 = rng.sample(StandardNormal);
                    v.sqrt() * z
                }))
            }
            NoiseCovariance::Dense { factor, .. } => {
                let n = factor.nrows();
                let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample(StandardNormal)));
                factor * z
            }
            NoiseCovariance::SineModes(s) => s.sample(rng),
        }
    }

    /// Adds one draw of the noise to `state` in place.
    pub fn perturb<R: Rng + ?Sized>(&self, state: &mut DVector<f64>, rng: &mut R) {
        match self {
            NoiseCovariance::Diagonal(var) => {
                for (x, v) in state.iter_mut().zip(var.iter()) {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += v.sqrt() * z;
                }
            }
            _ => *state += self.sample(rng),
        }
    }

    /// `log N(w; 0, Q)` without the normalizing constant. Returns `-inf` for
    /// sine-mode noise when `w` is outside the mode span and the
    /// support policy rejects it.
    pub fn log_density(&self, w: &DVector<f64>) -> Result<f64> {
        check_len("noise vector", self.dim(), w.len())?;
        check_finite(w.as_slice(), "noise vector")?;
        Ok(match self {
            NoiseCovariance::Diagonal(var) => {
                -0.5 * w
                    .iter()
                    .zip(var.iter())
                    .map(|(x, v)| x * x / v)
                    .sum::<f64>()
            }
            NoiseCovariance::Dense { factor, .. } => {
                let x = factor
                    .solve_lower_triangular(w)
                    .ok_or(Error::NotPositiveDefinite("dense covariance factor"))?;
                -0.5 * x.norm_squared()
            }
            NoiseCovariance::SineModes(s) => s.log_density_value(w)?,
        })
    }

    /// Same covariance shape with standard deviations multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            NoiseCovariance::Diagonal(v) => NoiseCovariance::Diagonal(v * (factor * factor)),
            NoiseCovariance::Dense { cov, factor: l } => NoiseCovariance::Dense {
                cov: cov * (factor * factor),
                factor: l * factor,
            },
            NoiseCovariance::SineModes(s) => NoiseCovariance::SineModes(s.with_sigma(s.sigma() * factor)),
        }
    }
}

/// `log N(next; mean_fn(prev), Q)` up to the `Q`-dependent constant.
pub fn gaussian_transition_logdensity<F>(
    prev: &StateVector,
    next: &StateVector,
    mean_fn: F,
    q: &NoiseCovariance,
) -> Result<f64>
where
    F: FnOnce(&StateVector) -> Result<StateVector>,
{
    check_finite(prev.as_slice(), "previous state")?;
    check_finite(next.as_slice(), "next state")?;
    let mean = mean_fn(prev)?;
    check_len("transition mean", next.len(), mean.len())?;
    q.log_density(&(next - mean))
}

/// Markov transition `Z_k = flow(Z_{k-1}, k) + W_k`, `W_k ~ N(0, Q)`.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;

    /// Deterministic flow over the interval `(t_{k-1}, t_k]`.
    fn flow(&self, state: &StateVector, k: usize) -> Result<StateVector>;

    /// Process-noise covariance `Q`.
    fn noise(&self) -> &NoiseCovariance;

    fn sample<R: Rng + ?Sized>(&self, prev: &StateVector, k: usize, rng: &mut R) -> Result<StateVector> {
        let mut next = self.flow(prev, k)?;
        self.noise().perturb(&mut next, rng);
        Ok(next)
    }

    fn log_density(&self, prev: &StateVector, next: &StateVector, k: usize) -> Result<f64> {
        gaussian_transition_logdensity(prev, next, |p| self.flow(p, k), self.noise())
    }
}

/// Conditional density of the observations given the hidden state.
pub trait ObservationModel: Send + Sync {
    fn obs_dim(&self) -> usize;

    /// Log-likelihood of `y` (constant dropped). `locations` overrides the
    /// model's own observer positions when the model has any.
    fn log_likelihood(
        &self,
        state: &StateVector,
        y: &ObsVector,
        locations: Option<&[Position]>,
    ) -> Result<f64>;

    /// Draws `y_k` given the state.
    fn observe<R: Rng + ?Sized>(
        &self,
        state: &StateVector,
        k: usize,
        locations: Option<&[Position]>,
        rng: &mut R,
    ) -> Result<ObsVector>;
}

/// States `z_0..z_n` and observations `y_1..y_n` of a simulated run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub observations: Vec<ObsVector>,
}

/// Generates synthetic truth and data from the model.
pub fn simulate_trajectory<D, O, R>(
    dynamics: &D,
    obs: &O,
    grid: &TimeGrid,
    z0: &StateVector,
    rng: &mut R,
) -> Result<Trajectory>
where
    D: Dynamics,
    O: ObservationModel,
    R: Rng + ?Sized,
{
    check_len("initial state", dynamics.dim(), z0.len())?;
    check_finite(z0.as_slice(), "initial state")?;
    let n = grid.n_obs();
    let mut states = Vec::with_capacity(n + 1);
    let mut observations = Vec::with_capacity(n);
    states.push(z0.clone());
    for k in 1..=n {
        let next = dynamics.sample(&states[k - 1], k, rng)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::FlowBlowUp { k });
        }
        observations.push(obs.observe(&next, k, None, rng)?);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        observations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn density_is_zero_at_the_mean() {
        let q = NoiseCovariance::isotropic(3, 0.3).unwrap();
        let prev = dvector![1.0, 2.0, 3.0];
        let next = prev.clone() * 2.0;
        let v = gaussian_transition_logdensity(&prev, &next, |p| Ok(p * 2.0), &q).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn scalar_unit_residual() {
        let q = NoiseCovariance::isotropic(1, 1.0).unwrap();
        let v = gaussian_transition_logdensity(&dvector![0.0], &dvector![1.0], |_| Ok(dvector![0.0]), &q)
            .unwrap();
        assert_eq!(v, -0.5);
    }

    #[test]
    fn dense_matches_hand_inverted_two_by_two() {
        let (a, b, c) = (2.0, 0.6, 1.5);
        let q = NoiseCovariance::dense(dmatrix![a, b; b, c]).unwrap();
        let mut rng = seeded(3, 0);
        for _ in 0..20 {
            let w = DVector::from_iterator(2, (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let det = a * c - b * b;
            let quad = (c * w[0] * w[0] - 2.0 * b * w[0] * w[1] + a * w[1] * w[1]) / det;
            assert_relative_eq!(q.log_density(&w).unwrap(), -0.5 * quad, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_dense_rejected_at_construction() {
        let err = NoiseCovariance::dense(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)));
    }

    #[test]
    fn non_finite_inputs_are_errors() {
        let q = NoiseCovariance::isotropic(1, 1.0).unwrap();
        let r = gaussian_transition_logdensity(&dvector![f64::NAN], &dvector![0.0], |p| Ok(p.clone()), &q);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn normalized_density_integrates_to_one() {
        // d = 1 quadrature of exp(log_density) against the known constant.
        let sigma = 0.7;
        let q = NoiseCovariance::isotropic(1, sigma).unwrap();
        let h = 1e-3;
        let mut total = 0.0;
        let mut x = -12.0 * sigma;
        while x <= 12.0 * sigma {
            total += q.log_density(&dvector![x]).unwrap().exp() * h;
            x += h;
        }
        let norm = (2.0 * std::f64::consts::PI).sqrt() * sigma;
        assert_relative_eq!(total / norm, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0], 1).is_err());
        assert!(TimeGrid::new(vec![0.5, 1.0], 1).is_err());
        assert!(TimeGrid::uniform(3, 600.0, 0).is_err());
        let g = TimeGrid::uniform(3, 600.0, 10).unwrap();
        assert_eq!(g.n_obs(), 3);
        assert_eq!(g.tau(2), 60.0);
    }

    #[test]
    fn scaled_noise_scales_density() {
        let q = NoiseCovariance::isotropic(2, 1.0).unwrap();
        let w = dvector![0.5, -1.0];
        let q2 = q.scaled(2.0);
        assert_relative_eq!(q2.log_density(&(w.clone() * 2.0)).unwrap(), q.log_density(&w).unwrap());
    }
}
