//! Run configuration and the geometries it describes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{gauss_curvature, read_mesh, Domain, RadialGrid, WarpedSurface};
use crate::imcf::ContinuationSchedule;
use crate::model::{CurvatureProfile, ModelManifold, ProfileSpec};
use crate::psolve::PSolveConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometrySpec,
    pub profile: ProfileSpec,
    /// Comparison model of the fake distance; by default the profile itself on radial grids
    /// and the measured curvature floor on surfaces.
    #[serde(default)]
    pub comparison: Option<ProfileSpec>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub solver: PSolveConfig,
    #[serde(default)]
    pub schedule: ContinuationSchedule,
    /// Radius of a ball around the pole to flow from; a point flow when absent.
    #[serde(default)]
    pub domain_radius: Option<f64>,
    #[serde(default)]
    pub audits: Option<Vec<AuditKind>>,
    /// Sobolev constant for the decay audit; the flat closed form is used on flat models.
    #[serde(default)]
    pub sobolev: Option<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_t_max")]
    pub model_t_max: f64,
}

fn default_p() -> f64 {
    1.5
}

fn default_t_max() -> f64 {
    40.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometrySpec {
    Radial {
        m: usize,
        eps_pole: f64,
        t_out: f64,
        n: usize,
        #[serde(default = "default_shift")]
        shift: f64,
    },
    WarpedSurface {
        n_t: usize,
        n_theta: usize,
        eps_pole: f64,
        t_out: f64,
        #[serde(default)]
        perturbation: Option<Perturbation>,
    },
    MeshFile {
        path: PathBuf,
    },
}

fn default_shift() -> f64 {
    0.01
}

/// `f = 1 + amplitude · bump(t) · Σ_k w_k sin(kθ + φ_k)` with `bump = sin²(π(t − a)/(b − a))` on
/// `(a, b)`. A single mode is `sin θ`; more modes draw weights and phases from the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: f64,
    pub band: (f64, f64),
    #[serde(default = "one")]
    pub modes: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    GradientBound,
    UpperBoundR,
    KernelFlux,
    FluxFunctionals,
    Decay,
    LimitFormula,
    MeanCurvature,
    Isoperimetric,
}

impl AuditKind {
    pub const ALL: [AuditKind; 8] = [
        AuditKind::GradientBound,
        AuditKind::UpperBoundR,
        AuditKind::KernelFlux,
        AuditKind::FluxFunctionals,
        AuditKind::Decay,
        AuditKind::LimitFormula,
        AuditKind::MeanCurvature,
        AuditKind::Isoperimetric,
    ];
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema must be {SCHEMA_VERSION}, got {}", self.schema)));
        }
        if !(self.p > 1.0) {
            return Err(Error::Config(format!("p must be > 1, got {}", self.p)));
        }
        if !(self.model_t_max > 0.0) {
            return Err(Error::Config("model_t_max must be > 0".into()));
        }
        if let Some(s) = self.sobolev {
            if !(s > 0.0) {
                return Err(Error::Config("sobolev must be > 0".into()));
            }
        }
        if let GeometrySpec::WarpedSurface { perturbation: Some(pt), .. } = &self.geometry {
            if !(pt.band.0 < pt.band.1) || pt.modes == 0 || !(pt.amplitude.abs() < 1.0) {
                return Err(Error::Config("perturbation needs a < b, at least one mode and |amplitude| < 1".into()));
            }
        }
        self.schedule.validate().map_err(|e| Error::Config(format!("schedule: {e}")))
    }

    pub fn dim(&self) -> usize {
        match self.geometry {
            GeometrySpec::Radial { m, .. } => m,
            _ => 2,
        }
    }

    pub fn model(&self) -> Result<Arc<ModelManifold>> {
        Ok(Arc::new(ModelManifold::new(self.dim(), self.profile.build()?, self.model_t_max)?))
    }

    /// Halves the mesh size `k` times.
    pub fn refine(&mut self, k: u32) {
        let f = 1usize << k;
        match &mut self.geometry {
            GeometrySpec::Radial { n, .. } => *n *= f,
            GeometrySpec::WarpedSurface { n_t, n_theta, .. } => {
                *n_t = (*n_t - 1) * f + 1;
                *n_theta *= f;
            }
            GeometrySpec::MeshFile { .. } => {}
        }
    }

    pub fn outer_radius(&self, dom: &Domain) -> f64 {
        match self.geometry {
            GeometrySpec::Radial { t_out, .. } | GeometrySpec::WarpedSurface { t_out, .. } => t_out,
            GeometrySpec::MeshFile { .. } => dom.distance().iter().cloned().fold(0.0, f64::max),
        }
    }
}

fn perturbation_fn(pt: &Perturbation, seed: u64) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
    let (a, b) = pt.band;
    let amp = pt.amplitude;
    let terms: Vec<(f64, f64, f64)> = if pt.modes == 1 {
        vec![(1.0, 1.0, 0.0)]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<(f64, f64)> = (0..pt.modes).map(|_| (rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI))).collect();
        let total: f64 = raw.iter().map(|r| r.0).sum();
        raw.iter().enumerate().map(|(k, r)| ((k + 1) as f64, r.0 / total, r.1)).collect()
    };
    Arc::new(move |t, th| {
        if t <= a || t >= b {
            return 1.0;
        }
        let bump = (PI * (t - a) / (b - a)).sin().powi(2);
        1.0 + amp * bump * terms.iter().map(|(k, w, ph)| w * (k * th + ph).sin()).sum::<f64>()
    })
}

/// A built geometry with the comparison model of its fake distance.
pub struct Built {
    pub domain: Domain,
    pub model: Arc<ModelManifold>,
    pub comparison: Arc<ModelManifold>,
    /// Smallest discrete Gauss curvature, on surfaces.
    pub k_min: Option<f64>,
}

pub fn build(cfg: &RunConfig) -> Result<Built> {
    let model = cfg.model()?;
    let domain = match &cfg.geometry {
        GeometrySpec::Radial { eps_pole, t_out, n, shift, .. } => Domain::Radial(RadialGrid::new(model.clone(), *eps_pole, *t_out, *n, *shift)?),
        GeometrySpec::WarpedSurface { n_t, n_theta, eps_pole, t_out, perturbation } => {
            let f = match perturbation {
                Some(pt) => perturbation_fn(pt, cfg.seed),
                None => Arc::new(|_: f64, _: f64| 1.0),
            };
            Domain::Surface(WarpedSurface::over_model(model.clone(), f, *n_t, *n_theta, *eps_pole, *t_out)?.build()?)
        }
        GeometrySpec::MeshFile { path } => {
            if model.dim() != 2 {
                return Err(Error::Config("mesh files describe surfaces".into()));
            }
            let mut mesh = read_mesh(path)?;
            mesh.background = Some(model.clone());
            Domain::Surface(mesh)
        }
    };
    let k_min = match &domain {
        Domain::Surface(s) => Some(gauss_curvature(s).iter().map(|c| c.value).fold(f64::INFINITY, f64::min)),
        Domain::Radial(_) => None,
    };
    let comparison = match (&cfg.comparison, k_min) {
        (Some(spec), _) => Arc::new(ModelManifold::new(cfg.dim(), spec.build()?, cfg.model_t_max)?),
        (None, Some(k)) => Arc::new(ModelManifold::new(2, CurvatureProfile::constant((-k).max(0.0)), cfg.model_t_max)?),
        (None, None) => model.clone(),
    };
    Ok(Built { domain, model, comparison, k_min })
}
