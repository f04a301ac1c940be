//! Rotationally symmetric model manifolds and their radial Green kernels.

mod kernel;
mod manifold;
mod profile;

pub use kernel::{Inversion, ModelKernel};
pub use manifold::{ModelManifold, Tail};
pub use profile::{CurvatureProfile, ProfileSpec};

use crate::error::{Error, Result};

/// Area of the unit `(m-1)`-sphere in `R^m`.
pub fn omega(m: usize) -> f64 {
    let mf = m as f64;
    2.0 * std::f64::consts::PI.powf(0.5 * mf) / statrs::function::gamma::gamma(0.5 * mf)
}

/// Logarithm of the Euclidean fundamental solution of the `p`-Laplacian in `R^m`, `p <= m`.
pub fn log_mu_euclidean(m: usize, p: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("r must be > 0, got {r}")));
    }
    let mf = m as f64;
    if !(p > 1.0) || p > mf {
        return Err(Error::Domain(format!("p must lie in (1, m], got {p}")));
    }
    let lw = omega(m).ln();
    if p < mf {
        let a = 1.0 / (p - 1.0);
        Ok(-a * lw + ((p - 1.0) / (mf - p)).ln() - (mf - p) / (p - 1.0) * r.ln())
    } else {
        if r >= 1.0 {
            return Err(Error::Domain("p = m fundamental solution is positive only for r < 1".into()));
        }
        Ok(-lw / (mf - 1.0) + (-r.ln()).ln())
    }
}

pub fn mu_euclidean(m: usize, p: f64, r: f64) -> Result<f64> {
    log_mu_euclidean(m, p, r).map(f64::exp)
}
