//! Exact Kalman filter for [`LinearModel`].

use nalgebra::{DMatrix, DVector};

use super::model::LinearModel;
use crate::error::{check_len, Error, Result};
use crate::model::ObsVector;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Which covariance representation the filter uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KalmanPath {
    /// Diagonal when `A` and `P_0` are diagonal (the covariance then stays
    /// diagonal because `C` is a coordinate selection), dense otherwise.
    #[default]
    Auto,
    Dense,
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    m.is_square()
        && m.iter()
            .enumerate()
            .all(|(k, v)| k % m.nrows() == k / m.nrows() || *v == 0.0)
}

/// Filtering beliefs for `k = 1..=n` from the prior `N(m0, P0)`.
pub fn kalman_filter(
    model: &LinearModel,
    m0: &DVector<f64>,
    p0: &DMatrix<f64>,
    observations: &[ObsVector],
    path: KalmanPath,
) -> Result<Vec<GaussianBelief>> {
    let d = model.dim();
    check_len("KF prior mean", d, m0.len())?;
    check_len("KF prior covariance", d, p0.nrows())?;
    check_len("KF prior covariance", d, p0.ncols())?;
    for y in observations {
        check_len("KF observation", model.selector.obs_dim(), y.len())?;
    }
    match (path, model.transition.diagonal()) {
        (KalmanPath::Auto, Some(a)) if is_diagonal(p0) => diagonal_kf(model, &a, m0, &p0.diagonal(), observations),
        _ => dense_kf(model, m0, p0, observations),
    }
}

fn diagonal_kf(
    model: &LinearModel,
    a: &DVector<f64>,
    m0: &DVector<f64>,
    p0: &DVector<f64>,
    observations: &[ObsVector],
) -> Result<Vec<GaussianBelief>> {
    let (sz2, sy2) = (model.sigma_z.powi(2), model.sigma_y.powi(2));
    let mut m = m0.clone();
    let mut p = p0.clone();
    let mut out = Vec::with_capacity(observations.len());
    for y in observations {
        m = a.component_mul(&m);
        for (pi, ai) in p.iter_mut().zip(a.iter()) {
            *pi = ai * ai * *pi + sz2;
        }
        for (r, &i) in model.selector.indices.iter().enumerate() {
            let s = p[i] + sy2;
            if !(s > 0.0) {
                return Err(Error::NotPositiveDefinite("innovation variance"));
            }
            let gain = p[i] / s;
            m[i] += gain * (y.values[r] - m[i]);
            p[i] *= 1.0 - gain;
        }
        out.push(GaussianBelief {
            mean: m.clone(),
            cov: DMatrix::from_diagonal(&p),
        });
    }
    Ok(out)
}

fn dense_kf(model: &LinearModel, m0: &DVector<f64>, p0: &DMatrix<f64>, observations: &[ObsVector]) -> Result<Vec<GaussianBelief>> {
    let d = model.dim();
    let a = model.transition.to_dense();
    let idx = &model.selector.indices;
    let sz2 = model.sigma_z.powi(2);
    let sy2 = model.sigma_y.powi(2);
    let mut m = m0.clone();
    let mut p = p0.clone();
    let mut out = Vec::with_capacity(observations.len());
    for y in observations {
        m = &a * &m;
        p = &a * &p * a.transpose() + DMatrix::identity(d, d) * sz2;
        if !idx.is_empty() {
            // S = C P Cᵀ + R and C P are row/column selections of P.
            let cp = p.select_rows(idx.iter());
            let mut s = cp.select_columns(idx.iter());
            for r in 0..idx.len() {
                s[(r, r)] += sy2;
            }
            let chol = s.cholesky().ok_or(Error::NotPositiveDefinite("innovation covariance"))?;
            let innov = &y.values - model.selector.apply(&m);
            // Kᵀ = S⁻¹ C P, so m += (C P)ᵀ S⁻¹ v and P -= (C P)ᵀ S⁻¹ C P.
            let kt = chol.solve(&cp);
            m += kt.transpose() * innov;
            p -= cp.transpose() * kt;
            p = (&p + p.transpose()) * 0.5;
        }
        out.push(GaussianBelief { mean: m.clone(), cov: p.clone() });
    }
    Ok(out)
}
