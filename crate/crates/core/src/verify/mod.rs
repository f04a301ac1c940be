//! Explicit constants of the decay and Harnack estimates, the flux functionals of a fake
//! distance, and audits of the corresponding inequalities on computed fields.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

pub use crate::audit::{AuditContext, EstimateAudit};
use crate::error::{Error, Result};
use crate::fake::FakeDistanceField;
use crate::geom::{geodesic_distance, Domain, TAG_COLLAR};
use crate::imcf::FlowResult;
use crate::model::{omega, ModelManifold};
use crate::psolve::{FieldKind, SolveReport};


fn check_p_nu(p: f64, nu: f64) -> Result<()> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p must be > 1, got {p}")));
    }
    if !(nu > p) || !nu.is_finite() {
        return Err(Error::Domain(format!("need p < ν, got p = {p}, ν = {nu}")));
    }
    Ok(())
}

/// Sharp constant `S` of `(∫|ψ|^{mp/(m−p)})^{(m−p)/m} ≤ S ∫|∇ψ|^p` on `R^m`, `1 ≤ p < m`.
/// At `p = 1` this is `m^{−(m−1)/m} ω_{m−1}^{−1/m}`.
pub fn flat_sobolev_constant(m: usize, p: f64) -> Result<f64> {
    let mf = m as f64;
    if !(p >= 1.0) || !(p < mf) {
        return Err(Error::Domain(format!("need 1 ≤ p < m, got p = {p}, m = {m}")));
    }
    if p == 1.0 {
        return Ok(mf.powf(-(mf - 1.0) / mf) * omega(m).powf(-1.0 / mf));
    }
    let lg = ln_gamma(1.0 + 0.5 * mf) + ln_gamma(mf) - ln_gamma(mf / p) - ln_gamma(1.0 + mf - mf / p);
    let log_k = -0.5 * std::f64::consts::PI.ln() - mf.ln() / p + (1.0 - 1.0 / p) * ((p - 1.0) / (mf - p)).ln() + lg / mf;
    Ok((p * log_k).exp())
}

/// Constant of the pointwise decay of the kernel: `S^{ν/p} [2^ν p (1+p)^p (p/(p−1))^{p−1}]^{(ν−p)/p}`.
pub fn decay_constant(p: f64, nu: f64, sobolev: f64) -> Result<f64> {
    check_p_nu(p, nu)?;
    if !(sobolev > 0.0) {
        return Err(Error::Domain(format!("the Sobolev constant must be > 0, got {sobolev}")));
    }
    let inner = nu * 2f64.ln() + p.ln() + p * (1.0 + p).ln() + (p - 1.0) * (p / (p - 1.0)).ln();
    Ok((nu / p * sobolev.ln() + (nu - p) / p * inner).exp())
}

/// The `p → 1` limit of [`decay_constant`]: `S^ν 2^{ν²−1}`.
pub fn decay_constant_limit(nu: f64, sobolev: f64) -> f64 {
    sobolev.powf(nu) * 2f64.powf(nu * nu - 1.0)
}

/// Branch constant `C̄` of the half-Harnack inequalities.
pub fn half_harnack_constants(p: f64, nu: f64, q: f64) -> Result<f64> {
    check_p_nu(p, nu)?;
    if q == 0.0 || !q.is_finite() {
        return Err(Error::Domain(format!("q must be finite and non-zero, got {q}")));
    }
    Ok(if q < 0.0 {
        2f64.powf(p + nu)
    } else if q < p {
        (nu * 2f64.ln() + p * 3f64.ln() + nu * nu.ln() - p * p.ln() - (nu - p) * (nu - p).ln()).exp()
    } else {
        2f64.powf(nu) * (1.0 + p).powf(p)
    })
}

/// Combined Harnack constant `2^ν max{(1+p)^p, 3^p ν^ν / (p^p (ν−p)^{ν−p})}`.
pub fn harnack_constant(p: f64, nu: f64) -> Result<f64> {
    Ok(half_harnack_constants(p, nu, p)?.max(half_harnack_constants(p, nu, 0.5 * p)?))
}

/// Exponent `q₀` of the sub-solution estimate: `q` itself unless the Moser chain
/// `q₀ k^j`, `k = ν/(ν−p)`, would hit `p − 1`, in which case `q₀` is moved so that the chain
/// passes `p − 1` at half an interval's distance.
pub fn moser_exponent(p: f64, nu: f64, q: f64) -> Result<f64> {
    check_p_nu(p, nu)?;
    if !(q > 0.0) {
        return Err(Error::Domain(format!("the sub-solution branch needs q > 0, got {q}")));
    }
    if q >= p {
        return Ok(q);
    }
    let k = nu / (nu - p);
    let a = q / k;
    let target = p - 1.0;
    if target <= a {
        return Ok(q);
    }
    let mut lo = a;
    let mut kj1 = 1.0;
    loop {
        let hi = lo * k;
        if target <= hi {
            let half = 0.5 * (hi - lo);
            let x = if target > 0.5 * (lo + hi) { target - half } else { target + half };
            return Ok(x / kj1);
        }
        lo = hi;
        kj1 *= k;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsRecord {
    pub p: f64,
    pub nu: f64,
    pub sobolev: f64,
    pub decay: f64,
    /// `C̄` for `q ∈ (0, p)`, `q ≥ p` and `q < 0`.
    pub half_harnack_low: f64,
    pub half_harnack_high: f64,
    pub half_harnack_super: f64,
    pub harnack: f64,
    pub decay_limit: f64,
}

impl ConstantsRecord {
    pub fn new(p: f64, nu: f64, sobolev: f64) -> Result<Self> {
        Ok(ConstantsRecord {
            p,
            nu,
            sobolev,
            decay: decay_constant(p, nu, sobolev)?,
            half_harnack_low: half_harnack_constants(p, nu, 0.5 * p)?,
            half_harnack_high: half_harnack_constants(p, nu, p)?,
            half_harnack_super: half_harnack_constants(p, nu, -1.0)?,
            harnack: harnack_constant(p, nu)?,
            decay_limit: decay_constant_limit(nu, sobolev),
        })
    }

    /// Flat constants on `R^m` with `ν = m`.
    pub fn flat(m: usize, p: f64) -> Result<Self> {
        Self::new(p, m as f64, flat_sobolev_constant(m, p)?)
    }
}

/// Volume weight of the decay estimate.
#[derive(Clone, Debug)]
pub enum Eta {
    One,
    /// Samples `(t, |B_t(o)|)`; `η(t) = sup_{s ≤ t} s^ν / |B_s|` over the samples.
    Volumes(Vec<(f64, f64)>),
}

impl Eta {
    fn log_eval(&self, t: f64, nu: f64) -> f64 {
        match self {
            Eta::One => 0.0,
            Eta::Volumes(s) => {
                let mut best = f64::NEG_INFINITY;
                for &(r, v) in s {
                    if r <= t || best == f64::NEG_INFINITY {
                        best = best.max(nu * r.ln() - v.ln());
                    }
                }
                best
            }
        }
    }
}

/// `|B_t(o)|` at the given radii, from the sublevel sets of the distance to the pole.
pub fn measured_ball_volumes(dom: &Domain, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    radii.iter().map(|&t| Ok((t, dom.level_set(dom.distance(), t)?.volume))).collect()
}

/// `𝒢 ≤ C^{1/(p−1)} η(2r)^{1/(p−1)} r^{−(ν−p)/(p−1)}` at every vertex off the pole, compared
/// in logs.
pub fn check_decay(dom: &Domain, kernel: &SolveReport, consts: &ConstantsRecord, eta: &Eta) -> Result<EstimateAudit> {
    if kernel.kind != FieldKind::Kernel {
        return Err(Error::Precondition("the decay estimate needs a Green kernel".into()));
    }
    if (kernel.p - consts.p).abs() > 1e-12 {
        return Err(Error::Precondition(format!("kernel p = {} but constants p = {}", kernel.p, consts.p)));
    }
    dom.check_field(&kernel.log_field)?;
    let (p, nu) = (consts.p, consts.nu);
    let a = 1.0 / (p - 1.0);
    let r = dom.distance();
    let lc = consts.decay.ln();
    let samples: Vec<_> = (0..dom.n_vertices())
        .filter(|&v| r[v] > 0.0)
        .map(|v| {
            let rhs = a * (lc + eta.log_eval(2.0 * r[v], nu)) - (nu - p) * a * r[v].ln();
            (v, kernel.log_field[v], rhs, 1e-9 * rhs.abs().max(1.0))
        })
        .collect();
    let name = match eta {
        Eta::One => "decay",
        Eta::Volumes(_) => "decay-volume-weighted",
    };
    Ok(EstimateAudit::inequality(name, samples).with_p(p).with_mesh(dom.id()).with_note("log G against log of the bound"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Sub,
    Super,
}

/// `A_∞ = {inner ≤ r ≤ outer}` and its `gap`-neighbourhood `A₀`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
    pub gap: f64,
}

/// Half-Harnack estimate for a positive field on an annulus around the pole: the sup (sub) or
/// inf (super) over `A_∞` against the `L^q` mean over `A₀`.
pub fn check_half_harnack(
    dom: &Domain,
    field: &[f64],
    role: Role,
    ann: &Annulus,
    q: f64,
    consts: &ConstantsRecord,
) -> Result<EstimateAudit> {
    dom.check_field(field)?;
    if !(ann.gap > 0.0) || !(ann.inner <= ann.outer) {
        return Err(Error::Domain("the annulus needs inner ≤ outer and a positive gap".into()));
    }
    if ann.inner - ann.gap <= dom.collar_radius() {
        return Err(Error::Precondition("the enlarged annulus reaches the pole collar".into()));
    }
    if field.iter().any(|&u| !(u > 0.0)) {
        return Err(Error::Precondition("the half-Harnack estimates need a positive field".into()));
    }
    let (p, nu) = (consts.p, consts.nu);
    let q0 = match role {
        Role::Sub => moser_exponent(p, nu, q)?,
        Role::Super if q < 0.0 => q,
        Role::Super => return Err(Error::Domain(format!("the super-solution branch needs q < 0, got {q}"))),
    };
    let cbar = half_harnack_constants(p, nu, q)?;
    let r = dom.distance();
    let vol = dom.vertex_volumes();
    let (lo, hi) = (ann.inner - ann.gap, ann.outer + ann.gap);
    let (mut a0, mut mean) = (0.0, 0.0);
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut arg_sup, mut arg_inf) = (0, 0);
    for v in 0..dom.n_vertices() {
        if r[v] > lo && r[v] < hi {
            a0 += vol[v];
            mean += vol[v] * field[v].powf(q);
        }
        if r[v] >= ann.inner && r[v] <= ann.outer {
            if field[v] > sup {
                sup = field[v];
                arg_sup = v;
            }
            if field[v] < inf {
                inf = field[v];
                arg_inf = v;
            }
        }
    }
    if a0 == 0.0 || sup == f64::NEG_INFINITY {
        return Err(Error::Precondition("the annulus contains no mesh vertices".into()));
    }
    mean /= a0;
    let log_rhs = nu / (p * q0) * (consts.sobolev * cbar).ln() - nu / q0 * ann.gap.ln() + a0.ln() / q0 + mean.ln() / q;
    let (name, loc, lhs, rhs) = match role {
        Role::Sub => ("half-harnack-sub", arg_sup, sup.ln(), log_rhs),
        Role::Super => ("half-harnack-super", arg_inf, -inf.ln(), -log_rhs),
    };
    Ok(EstimateAudit::inequality(name, [(loc, lhs, rhs, 1e-9 * rhs.abs().max(1.0))])
        .with_p(p)
        .with_mesh(dom.id())
        .with_note(&format!("logs; q = {q}, q0 = {q0}")))
}

/// Ball for the Harnack-form fit.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ball {
    /// Centred at distance `center` from the pole of a rotationally symmetric domain; its points
    /// fill `|r − center| ≤ radius`.
    Radial { center: f64, radius: f64 },
    /// Geodesic ball around a mesh vertex.
    Vertex { center: usize, radius: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct HarnackFit {
    /// `(p, (p − 1) log(sup/inf))` per field.
    pub exponents: Vec<(f64, f64)>,
    /// Least-squares constant through the exponents.
    pub c: f64,
    pub audit: EstimateAudit,
}

/// Fits `(p − 1) log(sup_B u / inf_B u)` to a constant over fields at several `p` and audits
/// every exponent against the fit with 10% slack.
pub fn check_harnack_form(dom: &Domain, fields: &[(f64, Vec<f64>)], ball: &Ball) -> Result<HarnackFit> {
    if fields.len() < 3 {
        return Err(Error::Precondition("the Harnack fit needs at least three values of p".into()));
    }
    let (inside, radius): (Vec<bool>, f64) = match *ball {
        Ball::Radial { center, radius } => {
            if center - 6.0 * radius <= dom.collar_radius() {
                return Err(Error::Precondition("six times the ball reaches the pole collar".into()));
            }
            (dom.distance().iter().map(|r| (r - center).abs() <= radius).collect(), radius)
        }
        Ball::Vertex { center, radius } => {
            let d = geodesic_distance(dom, center)?;
            if dom.tag(TAG_COLLAR)?.iter().any(|&v| d[v] <= 6.0 * radius) {
                return Err(Error::Precondition("six times the ball reaches the pole collar".into()));
            }
            (d.iter().map(|&x| x <= radius).collect(), radius)
        }
    };
    if !(radius > 0.0) || !inside.iter().any(|&b| b) {
        return Err(Error::Precondition("the ball contains no mesh vertices".into()));
    }
    let mut exponents = Vec::with_capacity(fields.len());
    for (p, u) in fields {
        dom.check_field(u)?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in (0..u.len()).filter(|&v| inside[v]) {
            lo = lo.min(u[v]);
            hi = hi.max(u[v]);
        }
        if !(lo > 0.0) {
            return Err(Error::Precondition("the Harnack fit needs positive fields".into()));
        }
        exponents.push((*p, (p - 1.0) * (hi / lo).ln()));
    }
    let c = exponents.iter().map(|e| e.1).sum::<f64>() / exponents.len() as f64;
    let audit = EstimateAudit::inequality("harnack-exponent", exponents.iter().enumerate().map(|(i, e)| (i, e.1, 1.1 * c, 1e-12)))
        .with_mesh(dom.id())
        .with_note(&format!("fitted c = {c}"));
    Ok(HarnackFit { exponents, c, audit })
}

/// Contour integral of `|∇𝒢|^{p−1}` over `{log 𝒢 = level}`.
pub fn kernel_flux(dom: &Domain, kernel: &SolveReport, level: f64) -> Result<f64> {
    if kernel.kind != FieldKind::Kernel {
        return Err(Error::Precondition("the flux needs a Green kernel".into()));
    }
    let gl = dom.gradient_norms(&kernel.log_field);
    let w: Vec<f64> = gl.iter().map(|g| (level.exp() * g).powf(kernel.p - 1.0)).collect();
    dom.level_integral(&kernel.log_field, level, &w, &vec![1.0; dom.n_vertices()])
}

/// `(𝒜_u(t), 𝒱_u(t))` for the sublevel sets of `rho`, normalized by the sphere and ball volumes
/// of `model`. The collar counts towards `𝒱_u` with `|∇ρ| = 1`.
pub fn flux_functionals_of(dom: &Domain, rho: &[f64], p: f64, model: &ModelManifold, u: &[f64], t: f64) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be > 0, got {t}")));
    }
    let g = dom.gradient_norms(rho);
    let wa: Vec<f64> = g.iter().map(|x| x.powf(p - 1.0)).collect();
    let wv: Vec<f64> = g.iter().map(|x| x.powf(p)).collect();
    let a = dom.level_integral(rho, t, &wa, u)?;
    let mut v = dom.sublevel_integral(rho, t, &wv, u)?;
    if let Ok(collar) = dom.tag(TAG_COLLAR) {
        if !collar.is_empty() {
            let s: f64 = collar.iter().filter(|&&x| rho[x] < t).map(|&x| u[x]).sum();
            v += dom.collar_volume() * s / collar.len() as f64;
        }
    }
    Ok((a / model.sphere_volume(t)?, v / model.ball_volume(t)?))
}

pub fn flux_functionals(dom: &Domain, fd: &FakeDistanceField, u: &[f64], t: f64) -> Result<(f64, f64)> {
    flux_functionals_of(dom, &fd.rho, fd.p, fd.model.model(), u, t)
}

/// One row of the level table of a fake distance or of `ρ₁`.
#[derive(Clone, Debug, Serialize)]
pub struct LevelRow {
    pub t: f64,
    pub a1: f64,
    pub v1: f64,
    pub perimeter: f64,
    pub v_h: f64,
    pub volume: f64,
    pub big_v_h: f64,
}

pub fn level_table(dom: &Domain, rho: &[f64], p: f64, model: &ModelManifold, levels: &[f64]) -> Result<Vec<LevelRow>> {
    let ones = vec![1.0; dom.n_vertices()];
    levels
        .par_iter()
        .map(|&t| {
            let (a1, v1) = flux_functionals_of(dom, rho, p, model, &ones, t)?;
            let ls = dom.level_set(rho, t)?;
            Ok(LevelRow {
                t,
                a1,
                v1,
                perimeter: ls.perimeter,
                v_h: model.sphere_volume(t)?,
                volume: ls.volume,
                big_v_h: model.ball_volume(t)?,
            })
        })
        .collect()
}

/// Relative tolerance of the perimeter identity.
pub const PERIMETER_TOL: f64 = 0.03;
/// Relative slack of the volume bound.
pub const VOLUME_TOL: f64 = 0.01;

/// Isoperimetric audits of the sublevel sets of `ρ₁`: the perimeter identity and the volume
/// bound at `levels`, and the approach of the perimeter ratio to 1 along increasing `small`
/// levels (each ratio at least as close to 1 as the next, up to `trend_tol`).
pub fn check_isoperimetric(
    dom: &Domain,
    fr: &FlowResult,
    levels: &[f64],
    small: &[f64],
    trend_tol: f64,
) -> Result<Vec<EstimateAudit>> {
    let model = fr.model.as_ref().ok_or_else(|| Error::Precondition("the flow carries no model".into()))?;
    let rows = level_table(dom, &fr.rho1, 1.0, model, levels)?;
    let per = EstimateAudit::identity(
        "perimeter-identity",
        rows.iter().enumerate().map(|(i, r)| (i, r.perimeter, r.v_h, PERIMETER_TOL * r.v_h)),
    );
    let vol = EstimateAudit::inequality(
        "volume-lower-bound",
        rows.iter().enumerate().map(|(i, r)| (i, r.big_v_h, r.volume, VOLUME_TOL * r.big_v_h)),
    );
    if small.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("small levels must be increasing".into()));
    }
    let ratios: Vec<f64> = level_table(dom, &fr.rho1, 1.0, model, small)?.iter().map(|r| (r.perimeter / r.v_h - 1.0).abs()).collect();
    let trend = EstimateAudit::inequality("perimeter-ratio-trend", ratios.windows(2).enumerate().map(|(i, w)| (i, w[0], w[1], trend_tol)))
        .with_note(&format!("|ratio − 1| at increasing levels: {ratios:?}"));
    Ok([per, vol, trend].into_iter().map(|a| a.with_p(1.0).with_mesh(fr.mesh.clone())).collect())
}
