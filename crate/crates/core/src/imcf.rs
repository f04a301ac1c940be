//! The p → 1 continuation towards the weak inverse mean curvature flow, from the pole or from a
//! compact domain containing it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audit::{EstimateAudit, Sample};
use crate::error::{Error, Result};
use crate::fake::{fake_distance, TOL_H};
use crate::geom::{boundary_geodesic_curvature, Domain, TAG_COLLAR, TAG_OUTER};
use crate::model::{CurvatureProfile, ModelKernel, ModelManifold};
use crate::psolve::{
    capacity_potential_from, complete_potential, green_kernel_from, log_transform, PSolveConfig,
};

/// Smallest exponent of the continuation.
pub const P_FLOOR: f64 = 1.001;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationSchedule {
    pub p_list: Vec<f64>,
    /// Cauchy tolerance on `sup |ρ_{p_k} − ρ_{p_{k+1}}|`.
    pub tol_flow: f64,
    /// Solver settings; `p` is overwritten per step.
    pub solver: PSolveConfig,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self::halving(9)
    }
}

impl ContinuationSchedule {
    /// `p_k = 1 + 0.5 · 2^{-k}` for `k = 0..=k_max`, floored at [`P_FLOOR`].
    pub fn halving(k_max: usize) -> Self {
        let mut p_list: Vec<f64> = (0..=k_max).map(|k| (1.0 + 0.5 * 0.5f64.powi(k as i32)).max(P_FLOOR)).collect();
        p_list.dedup();
        ContinuationSchedule { p_list, tol_flow: 0.05, solver: PSolveConfig::default() }
    }

    /// `{1.5, 1.25, 1.125, 1.0625}`, the schedule used on surface meshes.
    pub fn mesh() -> Self {
        Self::halving(3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_list.is_empty() {
            return Err(Error::Config("empty p schedule".into()));
        }
        if self.p_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("p schedule must be strictly decreasing".into()));
        }
        if !(self.p_list[self.p_list.len() - 1] > 1.0) {
            return Err(Error::Domain("schedule exponents must be > 1".into()));
        }
        if !(self.tol_flow > 0.0) {
            return Err(Error::Config("tol_flow must be > 0".into()));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlowMode {
    Point,
    Domain { tag: String },
}

/// Fields at one exponent of the continuation.
#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub p: f64,
    pub rho: Vec<f64>,
    /// `(1 − p) log 𝒢_p` (point mode) or `(1 − p) log u_p` (domain mode).
    pub w: Vec<f64>,
    pub log_kernel: Vec<f64>,
    pub iterations: usize,
    /// Fake inner and outer radii of the domain at this exponent.
    pub radii: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowResult {
    pub mode: FlowMode,
    pub p_list: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub cauchy_trace: Vec<f64>,
    /// The last three Cauchy differences decrease.
    pub cauchy_decreasing: bool,
    pub rho1: Vec<f64>,
    /// Point mode: `log v_h(ρ₁)`. Domain mode: the limit of `(1 − p) log u_p`.
    pub w: Vec<f64>,
    pub r_i: Option<f64>,
    pub r_o: Option<f64>,
    pub mesh: String,
    pub mesh_size: f64,
    #[serde(skip)]
    pub model: Option<Arc<ModelManifold>>,
}

/// Linear extrapolation to `p = 1` from the last two exponents.
pub fn richardson(p_a: f64, a: f64, p_b: f64, b: f64) -> f64 {
    let (qa, qb) = (p_a - 1.0, p_b - 1.0);
    b + (b - a) * qb / (qa - qb)
}

fn extrapolate(snaps: &[Snapshot], pick: impl Fn(&Snapshot) -> &[f64]) -> Vec<f64> {
    let n = snaps.len();
    if n == 1 {
        return pick(&snaps[0]).to_vec();
    }
    let (a, b) = (&snaps[n - 2], &snaps[n - 1]);
    pick(a).iter().zip(pick(b)).map(|(&x, &y)| if x.is_finite() && y.is_finite() { richardson(a.p, x, b.p, y) } else { y }).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_family(model: &ModelManifold, dom: &Domain, sched: &ContinuationSchedule) -> Result<()> {
    sched.validate()?;
    if model.dim() != dom.dim() {
        return Err(Error::Precondition("model and domain dimensions differ".into()));
    }
    for &p in &sched.p_list {
        if !model.nonparabolic(p)? {
            return Err(Error::Parabolic { p });
        }
    }
    Ok(())
}

/// Kernels and fake distances along the schedule, each kernel warm-started from the previous
/// fake distance.
fn kernel_sweep(dom: &Domain, model: &Arc<ModelManifold>, sched: &ContinuationSchedule) -> Result<Vec<Snapshot>> {
    let mut out: Vec<Snapshot> = Vec::with_capacity(sched.p_list.len());
    for &p in &sched.p_list {
        let cfg = PSolveConfig { p, ..sched.solver.clone() };
        let prev = out.last().map(|s| s.rho.clone());
        let rep = green_kernel_from(dom, &cfg, &[], prev.as_deref())?;
        let fd = fake_distance(dom, &rep, &ModelKernel::entire(model.clone(), p)?)?;
        out.push(Snapshot {
            p,
            w: rep.log_field.iter().map(|l| (1.0 - p) * l).collect(),
            rho: fd.rho,
            log_kernel: rep.log_field,
            iterations: rep.iterations.len(),
            radii: None,
        });
    }
    Ok(out)
}

fn cauchy(snaps: &[Snapshot], tol: f64) -> Result<(Vec<f64>, bool)> {
    let trace: Vec<f64> = snaps.windows(2).map(|w| sup_diff(&w[0].rho, &w[1].rho)).collect();
    let k = trace.len();
    let decreasing = k >= 3 && trace[k - 3..].windows(2).all(|w| w[1] < w[0]);
    if let Some(&last) = trace.last() {
        if !(last <= tol) && !decreasing {
            return Err(Error::NoLimit(format!("fake distances are not Cauchy: differences {trace:?}")));
        }
    }
    Ok((trace, decreasing))
}

/// Weak IMCF from the pole: `ρ₁` by extrapolation of the fake distances and `w = log v_h(ρ₁)`.
pub fn run_point_flow(dom: &Domain, model: &Arc<ModelManifold>, sched: &ContinuationSchedule) -> Result<FlowResult> {
    check_family(model, dom, sched)?;
    let snaps = kernel_sweep(dom, model, sched)?;
    let (trace, decreasing) = cauchy(&snaps, sched.tol_flow)?;
    let rho1: Vec<f64> = extrapolate(&snaps, |s| &s.rho).into_iter().map(|x| x.max(0.0)).collect();
    let w = rho1.iter().map(|&r| if r > 0.0 { model.log_v(r) } else { f64::NEG_INFINITY }).collect();
    Ok(FlowResult {
        mode: FlowMode::Point,
        p_list: sched.p_list.clone(),
        snapshots: snaps,
        cauchy_trace: trace,
        cauchy_decreasing: decreasing,
        rho1,
        w,
        r_i: None,
        r_o: None,
        mesh: dom.id(),
        mesh_size: dom.mesh_size(),
        model: Some(model.clone()),
    })
}

/// `(min ρ over ∂Ω, max ρ over Ω)`: the largest sublevel set inside `Ω` and the smallest one
/// containing it.
fn fake_radii(dom: &Domain, inside: &[bool], rho: &[f64]) -> (f64, f64) {
    let nb = dom.complex().neighbours();
    let mut r_i = f64::INFINITY;
    let mut r_o: f64 = 0.0;
    for v in 0..dom.n_vertices() {
        if inside[v] {
            r_o = r_o.max(rho[v]);
            if nb[v].iter().any(|&w| !inside[w]) {
                r_i = r_i.min(rho[v]);
            }
        }
    }
    (r_i, r_o)
}

/// Weak IMCF from the domain tagged `omega_tag`: `w = lim (1 − p) log u_p` for the capacity
/// potentials of `(Ω, M)`, with fake radii from the point-mode fake distances.
pub fn run_domain_flow(
    dom: &Domain,
    omega_tag: &str,
    model: &Arc<ModelManifold>,
    sched: &ContinuationSchedule,
) -> Result<FlowResult> {
    check_family(model, dom, sched)?;
    let omega = dom.tag(omega_tag)?;
    let mut inside = vec![false; dom.n_vertices()];
    for &v in omega {
        inside[v] = true;
    }
    if dom.tag(TAG_COLLAR)?.iter().any(|&v| !inside[v]) {
        return Err(Error::Precondition("Ω must contain the pole collar".into()));
    }
    if dom.tag(TAG_OUTER)?.iter().any(|&v| inside[v]) {
        return Err(Error::Precondition("Ω must be relatively compact in the mesh".into()));
    }
    let mut snaps = kernel_sweep(dom, model, sched)?;
    let mut prev: Option<(f64, Vec<f64>)> = None;
    for s in snaps.iter_mut() {
        let cfg = PSolveConfig { p: s.p, ..sched.solver.clone() };
        let init = prev.as_ref().map(|(q, l)| l.iter().map(|x| x * (q - 1.0) / (s.p - 1.0)).collect::<Vec<_>>());
        let pot = capacity_potential_from(dom, omega_tag, TAG_OUTER, &cfg, init.as_deref())?;
        let full = complete_potential(dom, &pot, TAG_OUTER)?;
        s.w = log_transform(&full)?;
        s.iterations += pot.iterations.len();
        s.radii = Some(fake_radii(dom, &inside, &s.rho));
        prev = Some((s.p, pot.log_field));
    }
    let (trace, decreasing) = cauchy(&snaps, sched.tol_flow)?;
    let rho1: Vec<f64> = extrapolate(&snaps, |s| &s.rho).into_iter().map(|x| x.max(0.0)).collect();
    let w = extrapolate(&snaps, |s| &s.w).into_iter().map(|x| x.max(0.0)).collect();
    let radii: Vec<(f64, f64)> = snaps.iter().map(|s| s.radii.unwrap()).collect();
    let n = snaps.len();
    let (r_i, r_o) = if n == 1 {
        radii[0]
    } else {
        let (pa, pb) = (snaps[n - 2].p, snaps[n - 1].p);
        (
            richardson(pa, radii[n - 2].0, pb, radii[n - 1].0),
            richardson(pa, radii[n - 2].1, pb, radii[n - 1].1),
        )
    };
    Ok(FlowResult {
        mode: FlowMode::Domain { tag: omega_tag.to_string() },
        p_list: sched.p_list.clone(),
        snapshots: snaps,
        cauchy_trace: trace,
        cauchy_decreasing: decreasing,
        rho1,
        w,
        r_i: Some(r_i),
        r_o: Some(r_o.max(r_i)),
        mesh: dom.id(),
        mesh_size: dom.mesh_size(),
        model: Some(model.clone()),
    })
}

impl FlowResult {
    fn model(&self) -> Result<&Arc<ModelManifold>> {
        self.model.as_ref().ok_or_else(|| Error::Precondition("flow result carries no model".into()))
    }

    fn omega(&self, dom: &Domain) -> Result<Vec<bool>> {
        let mut inside = vec![false; dom.n_vertices()];
        if let FlowMode::Domain { tag } = &self.mode {
            for &v in dom.tag(tag)? {
                inside[v] = true;
            }
        }
        Ok(inside)
    }

    fn check(&self, dom: &Domain) -> Result<()> {
        if self.mesh != dom.id() {
            return Err(Error::Precondition(format!("flow was computed on {} not {}", self.mesh, dom.id())));
        }
        Ok(())
    }
}

/// Cells audited for flow gradients: away from the collar, the outer boundary and `Ω`.
fn flow_cells(dom: &Domain, inside: &[bool]) -> Vec<bool> {
    let mut keep = dom.cells_outside_bands(&[(TAG_COLLAR, crate::fake::COLLAR_LAYERS), (TAG_OUTER, crate::fake::OUTER_LAYERS)]);
    for (k, c) in dom.cells().iter().enumerate() {
        if c.vertices().iter().any(|&v| inside[v]) {
            keep[k] = false;
        }
    }
    keep
}

fn grad_norm(c: &crate::geom::Cell, f: &[f64]) -> f64 {
    let g = c.gradient(f);
    (g[0] * g[0] + g[1] * g[1]).sqrt()
}

/// `(m − 1) e^{−w̃/(m−1)} h'(h^{-1}(e^{w̃/(m−1)}))` for the normalized `w̃ = w − log ω_{m−1}`.
pub fn mean_curvature_rhs(model: &ModelManifold, w_tilde: f64) -> Result<f64> {
    let m1 = (model.dim() - 1) as f64;
    // v_h(s) = ω h(s)^{m−1} = e^{w̃} ω
    let s = model.inv_sphere_volume((w_tilde + model.omega().ln()).exp())?;
    Ok(m1 * model.dh(s) * (-w_tilde / m1).exp())
}

/// `(m − 1) e^{−w̃/(m−1)} √(κ² e^{2w̃/(m−1)} + 1)`.
pub fn mean_curvature_rhs_kappa(m: usize, kappa: f64, w_tilde: f64) -> f64 {
    let m1 = (m - 1) as f64;
    m1 * (-w_tilde / m1).exp() * (kappa * kappa * (2.0 * w_tilde / m1).exp() + 1.0).sqrt()
}

/// Mean-curvature bound on the point flow, per cell with the right side at the cell's smallest
/// `w`; tolerance `c₁ h` relative. Returns the general audit and, for constant non-negative
/// curvature models, the κ-form.
pub fn check_mean_curvature_bound(dom: &Domain, fr: &FlowResult) -> Result<Vec<EstimateAudit>> {
    fr.check(dom)?;
    let model = fr.model()?.clone();
    let inside = fr.omega(dom)?;
    let keep = flow_cells(dom, &inside);
    let log_omega = model.omega().ln();
    let h = dom.mesh_size();
    let kappa = match model.profile() {
        CurvatureProfile::Constant { kappa2 } if *kappa2 >= 0.0 => Some(kappa2.sqrt()),
        _ => None,
    };
    let mut general: Vec<Sample> = Vec::new();
    let mut kform: Vec<Sample> = Vec::new();
    for (c, _) in dom.cells().iter().zip(&keep).filter(|(_, k)| **k) {
        let v = *c.vertices().iter().min_by(|a, b| fr.w[**a].total_cmp(&fr.w[**b])).unwrap();
        if !c.vertices().iter().all(|&x| fr.w[x].is_finite()) {
            continue;
        }
        let lhs = grad_norm(c, &fr.w);
        let wt = fr.w[v] - log_omega;
        let rhs = mean_curvature_rhs(&model, wt)?;
        general.push((v, lhs, rhs, TOL_H * h * rhs));
        if let Some(k) = kappa {
            let r = mean_curvature_rhs_kappa(model.dim(), k, wt);
            kform.push((v, lhs, r, TOL_H * h * r));
        }
    }
    let mut out = vec![EstimateAudit::inequality("mean-curvature-bound", general).with_mesh(dom.id())];
    if kappa.is_some() {
        out.push(EstimateAudit::inequality("mean-curvature-bound-kappa", kform).with_mesh(dom.id()));
    }
    Ok(out)
}

/// Largest positive part of the boundary mean curvature of `Ω`.
fn boundary_h_plus(dom: &Domain, fr: &FlowResult) -> Result<f64> {
    let FlowMode::Domain { tag } = &fr.mode else {
        return Err(Error::Precondition("domain-mode flow required".into()));
    };
    Ok(boundary_geodesic_curvature(dom, tag)?.iter().map(|s| s.value.max(0.0)).fold(0.0, f64::max))
}

/// Domain flow sandwich `log v_h(ρ₁) − log v_h(R_o) ≤ w ≤ log v_h(ρ₁) − log v_h(R_i)` outside `Ω`.
/// The tolerance converts `c₁ h` in distance into log-volume units.
pub fn check_sandwich(dom: &Domain, fr: &FlowResult) -> Result<Vec<EstimateAudit>> {
    fr.check(dom)?;
    let (Some(r_i), Some(r_o)) = (fr.r_i, fr.r_o) else {
        return Err(Error::Precondition("domain-mode flow required".into()));
    };
    let model = fr.model()?;
    let inside = fr.omega(dom)?;
    let h = dom.mesh_size();
    let (lv_i, lv_o) = (model.log_v(r_i), model.log_v(r_o));
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for v in (0..dom.n_vertices()).filter(|&v| !inside[v] && fr.rho1[v] > 0.0) {
        let lv = model.log_v(fr.rho1[v]);
        let tol = TOL_H * h * (model.mean_curvature(fr.rho1[v]) + model.mean_curvature(r_i));
        lower.push((v, lv - lv_o, fr.w[v], tol));
        upper.push((v, fr.w[v], lv - lv_i, tol));
    }
    Ok(vec![
        EstimateAudit::inequality("sandwich-lower", lower).with_mesh(dom.id()),
        EstimateAudit::inequality("sandwich-upper", upper).with_mesh(dom.id()),
    ])
}

/// `|∇w| ≤ max{(m − 1)√H(R_i), max_{∂Ω} ℋ₊}` outside `Ω`.
pub fn check_domain_gradient(dom: &Domain, fr: &FlowResult) -> Result<EstimateAudit> {
    fr.check(dom)?;
    let r_i = fr.r_i.ok_or_else(|| Error::Precondition("domain-mode flow required".into()))?;
    let model = fr.model()?;
    let h_plus = boundary_h_plus(dom, fr)?;
    let m1 = (dom.dim() - 1) as f64;
    let rhs = (m1 * model.curvature(r_i).max(0.0).sqrt()).max(h_plus);
    let tol = TOL_H * dom.mesh_size() * rhs;
    let keep = flow_cells(dom, &fr.omega(dom)?);
    let samples: Vec<Sample> = dom
        .cells()
        .iter()
        .zip(&keep)
        .filter(|(c, k)| **k && c.vertices().iter().all(|&v| fr.w[v].is_finite()))
        .map(|(c, _)| (c.verts[0], grad_norm(c, &fr.w), rhs, tol))
        .collect();
    Ok(EstimateAudit::inequality("domain-gradient-bound", samples).with_mesh(dom.id()))
}

/// Decay bound for `H = κ²/r²`: `|∇w| ≤ (R_o/ρ₁) max{κ'(m − 1)/R_i, max_{∂Ω} ℋ₊}` outside `Ω`,
/// with the right side at the cell's smallest `ρ₁`.
pub fn explicit_quadratic_decay_bound(dom: &Domain, fr: &FlowResult) -> Result<EstimateAudit> {
    fr.check(dom)?;
    let model = fr.model()?;
    let CurvatureProfile::Quadratic { kappa } = model.profile() else {
        return Err(Error::Precondition("the decay bound needs the quadratic profile".into()));
    };
    let (Some(r_i), Some(r_o)) = (fr.r_i, fr.r_o) else {
        return Err(Error::Precondition("domain-mode flow required".into()));
    };
    let kp = CurvatureProfile::quadratic_exponent(*kappa);
    let m1 = (dom.dim() - 1) as f64;
    let base = (kp * m1 / r_i).max(boundary_h_plus(dom, fr)?);
    let h = dom.mesh_size();
    let keep = flow_cells(dom, &fr.omega(dom)?);
    let samples: Vec<Sample> = dom
        .cells()
        .iter()
        .zip(&keep)
        .filter(|(c, k)| **k && c.vertices().iter().all(|&v| fr.w[v].is_finite() && fr.rho1[v] > 0.0))
        .map(|(c, _)| {
            let rmin = c.vertices().iter().map(|&v| fr.rho1[v]).fold(f64::INFINITY, f64::min);
            let rhs = r_o / rmin * base;
            (c.verts[0], grad_norm(c, &fr.w), rhs, TOL_H * h * rhs)
        })
        .collect();
    Ok(EstimateAudit::inequality("quadratic-decay-bound", samples).with_mesh(dom.id()))
}

/// Data for the lower bound on `ρ₁`.
#[derive(Clone, Debug, PartialEq)]
pub enum SobolevData {
    /// `L¹` Sobolev constant `𝒮`: `ρ₁ ≥ v_h^{-1}(r^{m−1} / (𝒮^m 2^{m²−1}))`.
    Constant(f64),
    /// Volume growth: `ρ₁ ≥ v_h^{-1}(C r^{ν−1} inf_{t ∈ (1, r)} |B_t|/t^ν)` for `r > 1`, with
    /// `(t, |B_t|)` samples.
    VolumeGrowth { c: f64, nu: f64, balls: Vec<(f64, f64)> },
}

/// Two-sided audit `lower(r) ≤ ρ₁ ≤ r`, tolerance `c₁ h`.
pub fn lower_bound_rho1(dom: &Domain, fr: &FlowResult, data: &SobolevData) -> Result<Vec<EstimateAudit>> {
    fr.check(dom)?;
    let model = fr.model()?;
    let m = dom.dim() as f64;
    let r = dom.distance();
    let tol = TOL_H * dom.mesh_size();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for v in 0..dom.n_vertices() {
        upper.push((v, fr.rho1[v], r[v], tol));
        let target = match data {
            SobolevData::Constant(s) => {
                if !(*s > 0.0) {
                    return Err(Error::Domain("Sobolev constant must be > 0".into()));
                }
                Some(r[v].powf(m - 1.0) / (s.powf(m) * 2f64.powf(m * m - 1.0)))
            }
            SobolevData::VolumeGrowth { c, nu, balls } => {
                if r[v] > 1.0 {
                    balls
                        .iter()
                        .filter(|(t, _)| *t > 1.0 && *t < r[v])
                        .map(|(t, b)| b / t.powf(*nu))
                        .reduce(f64::min)
                        .map(|inf| c * r[v].powf(nu - 1.0) * inf)
                } else {
                    None
                }
            }
        };
        if let Some(x) = target.filter(|x| *x > 0.0) {
            lower.push((v, model.inv_sphere_volume(x)?, fr.rho1[v], tol));
        }
    }
    Ok(vec![
        EstimateAudit::inequality("rho1-lower-bound", lower).with_mesh(dom.id()),
        EstimateAudit::inequality("rho1-below-distance", upper).with_mesh(dom.id()),
    ])
}

/// `[𝒢_p]^{p−1} v_h(ρ₁) = 1` at the last exponent, within `rel_tol`, away from the collar.
pub fn check_limit_formula(dom: &Domain, fr: &FlowResult, rel_tol: f64) -> Result<EstimateAudit> {
    fr.check(dom)?;
    let model = fr.model()?;
    let last = fr.snapshots.last().ok_or_else(|| Error::Precondition("empty flow".into()))?;
    let collar = dom.hop_distance(TAG_COLLAR)?;
    let samples: Vec<Sample> = (0..dom.n_vertices())
        .filter(|&v| collar[v] > 0 && fr.rho1[v] > 0.0)
        .map(|v| (v, ((last.p - 1.0) * last.log_kernel[v] + model.log_v(fr.rho1[v])).exp(), 1.0, rel_tol))
        .collect();
    Ok(EstimateAudit::identity("limit-formula", samples).with_p(last.p).with_mesh(dom.id()))
}

#[cfg(test)]
mod tests;
