//! Boundary-vanishing stochastic forcing built from sine modes.
//!
//! Each field (η, u, v) gets an independent draw `Ξ = S1 ε S2ᵀ` with
//! `ε_mn ~ N(0, σ²/(max(m, n) + 1))`. Sine arguments use the closed-interval
//! node coordinate `s_l = l/(N-1)`, so every draw is exactly zero on all four
//! edges of the grid. Mode index 0 is identically zero, so a draw lives in a
//! subspace of rank `(J-1)²` per field and densities are defined there.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// What the density does with a vector that has components outside the mode span.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportPolicy {
    /// Out-of-span vectors get density zero (`-inf` in log space).
    #[default]
    Reject,
    /// Out-of-span components are discarded and the projection is scored.
    Project,
}

/// Declarative noise settings; [`SineNoiseSpec::build`] precomputes the
/// sine matrices for a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineNoiseSpec {
    /// `J`, number of modes per direction (including the null mode 0).
    pub modes: usize,
    /// `σ`, base scale.
    pub sigma: f64,
    #[serde(default)]
    pub support: SupportPolicy,
}

impl SineNoiseSpec {
    pub fn build(&self, nx: usize, ny: usize) -> Result<SineNoise> {
        SineNoise::new(nx, ny, self.modes, self.sigma, 3, self.support)
    }
}

/// Result of scoring a vector under the sine-mode Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineLogDensity {
    /// Mode-space log-density of the projection, constant dropped.
    pub log_density: f64,
    /// Largest relative projection residual over the fields.
    pub residual: f64,
    pub in_support: bool,
}

#[derive(Clone, Debug)]
pub struct SineNoise {
    nx: usize,
    ny: usize,
    modes: usize,
    sigma: f64,
    fields: usize,
    support: SupportPolicy,
    /// Full `N_y × J` and `N_x × J` sine matrices.
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
    /// Left pseudo-inverses of the non-null columns, `(J-1) × N`.
    p1: DMatrix<f64>,
    p2: DMatrix<f64>,
    /// Mode weights `1/(max(m, n) + 1)` for `m, n >= 1`.
    weights: DMatrix<f64>,
}

pub const SUPPORT_TOLERANCE: f64 = 1e-8;

fn sine_matrix(n: usize, modes: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, modes);
    if n < 2 {
        return s;
    }
    for m in 1..modes {
        for l in 1..n - 1 {
            let arg = std::f64::consts::PI * m as f64 * l as f64 / (n - 1) as f64;
            s[(l, m)] = arg.sin();
        }
    }
    s
}

fn left_pinv(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = s.transpose() * s;
    let chol = gram
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("sine mode Gram matrix"))?;
    Ok(chol.solve(&s.transpose()))
}

impl SineNoise {
    pub fn new(
        nx: usize,
        ny: usize,
        modes: usize,
        sigma: f64,
        fields: usize,
        support: SupportPolicy,
    ) -> Result<Self> {
        if modes == 0 || fields == 0 || nx == 0 || ny == 0 {
            return Err(Error::InvalidConfig("sine noise needs J >= 1 and a non-empty grid".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sine noise sigma must be > 0, got {sigma}")));
        }
        if modes > 1 && (modes > nx.saturating_sub(1) || modes > ny.saturating_sub(1)) {
            return Err(Error::InvalidConfig(format!(
                "J = {modes} sine modes need at least J + 1 nodes per direction (grid {nx}x{ny})"
            )));
        }
        let s1 = sine_matrix(ny, modes);
        let s2 = sine_matrix(nx, modes);
        let r = modes - 1;
        let (p1, p2) = if r == 0 {
            (DMatrix::zeros(0, ny), DMatrix::zeros(0, nx))
        } else {
            (
                left_pinv(&s1.columns(1, r).into_owned())?,
                left_pinv(&s2.columns(1, r).into_owned())?,
            )
        };
        let weights = DMatrix::from_fn(r, r, |m, n| 1.0 / ((m + 1).max(n + 1) + 1) as f64);
        Ok(SineNoise {
            nx,
            ny,
            modes,
            sigma,
            fields,
            support,
            s1,
            s2,
            p1,
            p2,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.fields * self.nx * self.ny
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn support(&self) -> SupportPolicy {
        self.support
    }

    pub fn s1(&self) -> &DMatrix<f64> {
        &self.s1
    }

    pub fn s2(&self) -> &DMatrix<f64> {
        &self.s2
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        SineNoise {
            sigma,
            ..self.clone()
        }
    }

    pub fn with_support(&self, support: SupportPolicy) -> Self {
        SineNoise {
            support,
            ..self.clone()
        }
    }

    /// Variance of mode coefficient `(m, n)`, zero-based with the null mode at 0.
    pub fn mode_variance(&self, m: usize, n: usize) -> f64 {
        self.sigma * self.sigma / (m.max(n) + 1) as f64
    }

    /// Field from a full `J × J` coefficient matrix (row mode for y, column mode for x).
    pub fn field_from_coefficients(&self, eps: &DMatrix<f64>) -> DMatrix<f64> {
        &self.s1 * eps * self.s2.transpose()
    }

    /// Draws `W = [vec Ξ^η; vec Ξ^u; vec Ξ^v]`, column-major per field.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let block = self.nx * self.ny;
        let mut out = DVector::zeros(self.dim());
        let r = self.modes - 1;
        if r == 0 {
            return out;
        }
        let s1r = self.s1.columns(1, r);
        let s2r = self.s2.columns(1, r);
        for f in 0..self.fields {
            let eps = DMatrix::from_fn(r, r, |m, n| {
                let z: f64 = rng.sample(StandardNormal);
                z * self.sigma * self.weights[(m, n)].sqrt()
            });
            let xi = s1r * eps * s2r.transpose();
            out.rows_mut(f * block, block).copy_from_slice(xi.as_slice());
        }
        out
    }

    /// Mode-space Gaussian log-density of `w` (constant dropped) together
    /// with the projection residual.
    pub fn log_density(&self, w: &DVector<f64>) -> Result<SineLogDensity> {
        check_len("sine noise vector", self.dim(), w.len())?;
        let block = self.nx * self.ny;
        let r = self.modes - 1;
        let var0 = self.sigma * self.sigma;
        let mut log_density = 0.0;
        let mut residual: f64 = 0.0;
        for f in 0..self.fields {
            let xi = DMatrix::from_column_slice(self.ny, self.nx, &w.as_slice()[f * block..(f + 1) * block]);
            let norm = xi.norm();
            if norm == 0.0 {
                continue;
            }
            if r == 0 {
                residual = f64::INFINITY;
                continue;
            }
            let c = &self.p1 * &xi * self.p2.transpose();
            let recon = self.s1.columns(1, r) * &c * self.s2.columns(1, r).transpose();
            residual = residual.max((xi - recon).norm() / norm);
            log_density -= 0.5
                * c.iter()
                    .zip(self.weights.iter())
                    .map(|(c, wgt)| c * c / (var0 * wgt))
                    .sum::<f64>();
        }
        Ok(SineLogDensity {
            log_density,
            residual,
            in_support: residual <= SUPPORT_TOLERANCE,
        })
    }

    /// Log-density under the configured [`SupportPolicy`].
    pub fn log_density_value(&self, w: &DVector<f64>) -> Result<f64> {
        let eval = self.log_density(w)?;
        Ok(match (eval.in_support, self.support) {
            (true, _) | (false, SupportPolicy::Project) => eval.log_density,
            (false, SupportPolicy::Reject) => f64::NEG_INFINITY,
        })
    }

    /// Dense covariance of one field, `E[Ξ_{i1 j1} Ξ_{i2 j2}]`, in the
    /// column-major vectorization. Intended for small grids.
    pub fn dense_field_covariance(&self) -> DMatrix<f64> {
        let block = self.nx * self.ny;
        DMatrix::from_fn(block, block, |a, b| {
            let (i1, j1) = (a % self.ny, a / self.ny);
            let (i2, j2) = (b % self.ny, b / self.ny);
            self.covariance_entry(i1, j1, i2, j2)
        })
    }

    pub fn covariance_entry(&self, i1: usize, j1: usize, i2: usize, j2: usize) -> f64 {
        let mut acc = 0.0;
        for m in 0..self.modes {
            for n in 0..self.modes {
                acc += self.s1[(i1, m)] * self.s1[(i2, m)] * self.s2[(j1, n)] * self.s2[(j2, n)]
                    / (m.max(n) + 1) as f64;
            }
        }
        self.sigma * self.sigma * acc
    }
}

/// Draws one noise vector; the free-function form of [`SineNoise::sample`].
pub fn sample_sine_noise<R: Rng + ?Sized>(noise: &SineNoise, rng: &mut R) -> DVector<f64> {
    noise.sample(rng)
}

pub fn sine_noise_logdensity(w: &DVector<f64>, noise: &SineNoise) -> Result<SineLogDensity> {
    noise.log_density(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn boundary_values(noise: &SineNoise, w: &DVector<f64>) -> Vec<f64> {
        let (nx, ny) = (noise.nx, noise.ny);
        let mut out = Vec::new();
        for f in 0..noise.fields {
            let xi = DMatrix::from_column_slice(ny, nx, &w.as_slice()[f * nx * ny..(f + 1) * nx * ny]);
            for i in 0..ny {
                out.push(xi[(i, 0)]);
                out.push(xi[(i, nx - 1)]);
            }
            for j in 0..nx {
                out.push(xi[(0, j)]);
                out.push(xi[(ny - 1, j)]);
            }
        }
        out
    }

    #[test]
    fn single_mode_is_identically_zero() {
        let noise = SineNoise::new(6, 5, 1, 1.0, 3, SupportPolicy::Reject).unwrap();
        let w = noise.sample(&mut seeded(1, 0));
        assert!(w.iter().all(|v| *v == 0.0));
        let d = noise.log_density(&w).unwrap();
        assert_eq!(d.log_density, 0.0);
        assert!(d.in_support);
    }

    #[test]
    fn zero_vector_scores_zero() {
        let noise = SineNoise::new(8, 8, 4, 0.3, 3, SupportPolicy::Reject).unwrap();
        assert_eq!(noise.log_density_value(&DVector::zeros(noise.dim())).unwrap(), 0.0);
    }

    #[test]
    fn single_mode_quadratic() {
        let noise = SineNoise::new(9, 7, 4, 0.2, 1, SupportPolicy::Reject).unwrap();
        let c = 0.37;
        let mut eps = DMatrix::zeros(4, 4);
        eps[(1, 1)] = c;
        let w = DVector::from_column_slice(noise.field_from_coefficients(&eps).as_slice());
        let d = noise.log_density(&w).unwrap();
        assert!(d.in_support);
        assert_relative_eq!(d.log_density, -c * c * 2.0 / (2.0 * 0.04), max_relative = 1e-12);
    }

    #[test]
    fn off_span_vectors_are_flagged() {
        let noise = SineNoise::new(8, 8, 3, 1.0, 1, SupportPolicy::Reject).unwrap();
        let w = DVector::from_element(64, 1.0);
        let d = noise.log_density(&w).unwrap();
        assert!(!d.in_support);
        assert_eq!(noise.log_density_value(&w).unwrap(), f64::NEG_INFINITY);
        let projected = noise.with_support(SupportPolicy::Project);
        assert!(projected.log_density_value(&w).unwrap().is_finite());
    }

    #[test]
    fn mode_space_density_matches_dense_pseudo_inverse() {
        let noise = SineNoise::new(8, 8, 5, 0.7, 1, SupportPolicy::Reject).unwrap();
        let cov = noise.dense_field_covariance();
        let pinv = cov.clone().pseudo_inverse(1e-10).unwrap();
        let mut rng = seeded(11, 0);
        for _ in 0..10 {
            let w = noise.sample(&mut rng);
            let dense = -0.5 * (w.transpose() * &pinv * &w)[(0, 0)];
            let modal = noise.log_density(&w).unwrap();
            assert!(modal.in_support);
            assert!((dense - modal.log_density).abs() < 1e-8, "{dense} vs {}", modal.log_density);
        }
    }

    #[test]
    fn too_many_modes_rejected() {
        assert!(SineNoise::new(8, 8, 8, 1.0, 3, SupportPolicy::Reject).is_err());
        assert!(SineNoise::new(8, 8, 7, 1.0, 3, SupportPolicy::Reject).is_ok());
    }

    proptest! {
        #[test]
        fn draws_vanish_on_every_edge(seed in any::<u64>(), nx in 3usize..12, ny in 3usize..12, j in 1usize..6) {
            let j = j.min(nx - 1).min(ny - 1);
            let noise = SineNoise::new(nx, ny, j, 1.3, 3, SupportPolicy::Reject).unwrap();
            let w = noise.sample(&mut seeded(seed, 0));
            prop_assert!(boundary_values(&noise, &w).iter().all(|v| *v == 0.0));
        }

        #[test]
        fn draws_are_in_support(seed in any::<u64>()) {
            let noise = SineNoise::new(10, 12, 6, 0.01, 3, SupportPolicy::Reject).unwrap();
            let w = noise.sample(&mut seeded(seed, 0));
            let d = noise.log_density(&w).unwrap();
            prop_assert!(d.in_support, "residual {}", d.residual);
        }
    }
}
