use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial curvature function `H(t)` for `t >= 0`.
#[derive(Clone)]
pub enum CurvatureProfile {
    /// `H ≡ kappa2`. Negative values describe spheres, used only as comparison models from above.
    Constant { kappa2: f64 },
    /// `H = kappa^2 / t^2`, giving the power-law warping `h = t^{κ'}`, `κ' = (1 + sqrt(1 + 4κ²)) / 2`.
    Quadratic { kappa: f64 },
    /// Piecewise linear table with constant extension past the last node.
    Table { t: Vec<f64>, h: Vec<f64> },
    Closure { name: String, f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for CurvatureProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurvatureProfile::Constant { kappa2 } => write!(f, "Constant({kappa2})"),
            CurvatureProfile::Quadratic { kappa } => write!(f, "Quadratic({kappa})"),
            CurvatureProfile::Table { t, .. } => write!(f, "Table({} nodes)", t.len()),
            CurvatureProfile::Closure { name, .. } => write!(f, "Closure({name})"),
        }
    }
}

impl CurvatureProfile {
    pub fn constant(kappa2: f64) -> Self {
        CurvatureProfile::Constant { kappa2 }
    }

    pub fn closure<F: Fn(f64) -> f64 + Send + Sync + 'static>(name: &str, f: F) -> Self {
        CurvatureProfile::Closure { name: name.to_string(), f: Arc::new(f) }
    }

    /// `H = c / (1 + t)^2`.
    pub fn inverse_square(c: f64) -> Self {
        Self::closure(&format!("{c}/(1+t)^2"), move |t| c / ((1.0 + t) * (1.0 + t)))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CurvatureProfile::Constant { kappa2 } => {
                if !kappa2.is_finite() {
                    return Err(Error::InvalidProfile("non-finite constant".into()));
                }
            }
            CurvatureProfile::Quadratic { kappa } => {
                if !kappa.is_finite() || *kappa < 0.0 {
                    return Err(Error::InvalidProfile(format!("quadratic kappa must be >= 0, got {kappa}")));
                }
            }
            CurvatureProfile::Table { t, h } => {
                if t.len() < 2 || t.len() != h.len() {
                    return Err(Error::InvalidProfile("table needs >= 2 nodes and equal lengths".into()));
                }
                if t[0] > 0.0 {
                    return Err(Error::InvalidProfile("table must start at t <= 0".into()));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidProfile("table abscissae must be strictly increasing".into()));
                }
                if h.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidProfile("table values must be finite and >= 0".into()));
                }
            }
            CurvatureProfile::Closure { .. } => {}
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            CurvatureProfile::Constant { kappa2 } => *kappa2,
            CurvatureProfile::Quadratic { kappa } => kappa * kappa / (t * t),
            CurvatureProfile::Table { t: ts, h } => {
                if t <= ts[0] {
                    return h[0];
                }
                let n = ts.len();
                if t >= ts[n - 1] {
                    return h[n - 1];
                }
                let k = ts.partition_point(|&x| x <= t) - 1;
                let s = (t - ts[k]) / (ts[k + 1] - ts[k]);
                h[k] * (1.0 - s) + h[k + 1] * s
            }
            CurvatureProfile::Closure { f, .. } => f(t),
        }
    }

    /// `κ'` for the quadratic profile.
    pub fn quadratic_exponent(kappa: f64) -> f64 {
        0.5 * (1.0 + (1.0 + 4.0 * kappa * kappa).sqrt())
    }

    pub fn to_spec(&self) -> Option<ProfileSpec> {
        match self {
            CurvatureProfile::Constant { kappa2 } => Some(ProfileSpec::Constant { kappa2: *kappa2 }),
            CurvatureProfile::Quadratic { kappa } => Some(ProfileSpec::Quadratic { kappa: *kappa }),
            CurvatureProfile::Table { t, h } => Some(ProfileSpec::Table { t: t.clone(), h: h.clone() }),
            CurvatureProfile::Closure { .. } => None,
        }
    }
}

/// Serializable description of a profile, used by configs.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileSpec {
    Constant { kappa2: f64 },
    Quadratic { kappa: f64 },
    Table { t: Vec<f64>, h: Vec<f64> },
    /// `H = c / (1 + t)^2`
    InverseSquare { c: f64 },
}

impl ProfileSpec {
    pub fn build(&self) -> Result<CurvatureProfile> {
        let p = match self {
            ProfileSpec::Constant { kappa2 } => CurvatureProfile::Constant { kappa2: *kappa2 },
            ProfileSpec::Quadratic { kappa } => CurvatureProfile::Quadratic { kappa: *kappa },
            ProfileSpec::Table { t, h } => CurvatureProfile::Table { t: t.clone(), h: h.clone() },
            ProfileSpec::InverseSquare { c } => {
                if *c < 0.0 {
                    return Err(Error::InvalidProfile("inverse-square coefficient must be >= 0".into()));
                }
                CurvatureProfile::inverse_square(*c)
            }
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolates_and_extends() {
        let p = CurvatureProfile::Table { t: vec![0.0, 1.0, 2.0], h: vec![0.0, 1.0, 3.0] };
        p.validate().unwrap();
        assert!((p.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((p.eval(1.5) - 2.0).abs() < 1e-15);
        assert_eq!(p.eval(10.0), 3.0);
    }

    #[test]
    fn rejects_bad_tables() {
        let nonmono = CurvatureProfile::Table { t: vec![0.0, 2.0, 1.0], h: vec![0.0; 3] };
        assert!(matches!(nonmono.validate(), Err(Error::InvalidProfile(_))));
        let neg = CurvatureProfile::Table { t: vec![0.0, 1.0], h: vec![0.0, -1.0] };
        assert!(neg.validate().is_err());
        assert!(CurvatureProfile::Quadratic { kappa: -1.0 }.validate().is_err());
    }

    #[test]
    fn quadratic_exponent_values() {
        assert_eq!(CurvatureProfile::quadratic_exponent(0.0), 1.0);
        // κ² = 2 gives κ' = 2
        assert!((CurvatureProfile::quadratic_exponent(2f64.sqrt()) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spec_roundtrip() {
        let s = ProfileSpec::InverseSquare { c: 1.0 };
        let j = serde_json::to_string(&s).unwrap();
        let back: ProfileSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        assert!((back.build().unwrap().eval(1.0) - 0.25).abs() < 1e-15);
    }
}
