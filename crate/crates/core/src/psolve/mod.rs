//! p-Laplace solves: capacity potentials, Green kernels by exhaustion, weak residuals.

pub mod banded;
mod solver;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use solver::{IterRecord, Phase};

use crate::error::{Error, Result};
use crate::geom::{Domain, TAG_COLLAR, TAG_OUTER};
use crate::model::{log_mu_euclidean, ModelKernel};
use crate::quad::{log_add_exp, log_sum_exp};
use solver::{log_grad_norm, row_residual, Settings, System};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PSolveConfig {
    pub p: f64,
    /// Regularization levels as multiples of the initial gradient scale `median |∇ log u₀|`.
    pub eps_schedule: Vec<f64>,
    pub tol_energy: f64,
    pub tol_grad: f64,
    /// IRLS iterations per regularization level.
    pub max_iters: usize,
    pub max_newton: usize,
    pub linear_tol: f64,
    /// Default exhaustion radii as fractions of the outer chart radius.
    pub exhaustion: Vec<f64>,
    /// Tolerance on `sup (p − 1)|log 𝒢_j − log 𝒢_{j−1}|` between the last two exhaustion members.
    pub exhaustion_tol: f64,
    /// Wall-clock budget per solve in seconds.
    pub time_budget: Option<f64>,
}

impl Default for PSolveConfig {
    fn default() -> Self {
        PSolveConfig {
            p: 2.0,
            eps_schedule: vec![0.5, 0.25, 0.125],
            tol_energy: 1e-6,
            tol_grad: 1e-10,
            max_iters: 8,
            max_newton: 60,
            linear_tol: 1e-8,
            exhaustion: vec![0.6, 1.0],
            exhaustion_tol: 2e-2,
            time_budget: None,
        }
    }
}

impl PSolveConfig {
    pub fn with_p(p: f64) -> Self {
        PSolveConfig { p, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::Domain(format!("p must be > 1, got {}", self.p)));
        }
        if self.eps_schedule.iter().any(|e| !(*e > 0.0)) || self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("eps_schedule must be positive and strictly decreasing".into()));
        }
        if self.eps_schedule.last().is_some_and(|e| *e < 1e-3) {
            return Err(Error::Config("the last regularization level must be ≥ 1e-3".into()));
        }
        if !(self.tol_grad > 0.0) || !(self.tol_energy > 0.0) || !(self.linear_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.exhaustion.is_empty() || self.exhaustion.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::Config("exhaustion fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn settings(&self, g0: f64) -> Settings {
        Settings {
            eps: self.eps_schedule.iter().map(|e| e * g0).collect(),
            tol_energy: self.tol_energy,
            tol_grad: self.tol_grad,
            max_iters: self.max_iters,
            max_newton: self.max_newton,
            linear_tol: self.linear_tol,
            deadline: self.time_budget.map(|s| Instant::now() + Duration::from_secs_f64(s)),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Potential,
    Kernel,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExhaustionMember {
    /// Outer chart radius of the member.
    pub radius: f64,
    pub log_capacity: f64,
    /// `sup (p − 1)|log 𝒢_j − log 𝒢_{j−1}|` over the innermost region.
    pub sup_change: Option<f64>,
}

/// Result of a p-Laplace solve. The field is held as its natural log.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub kind: FieldKind,
    pub p: f64,
    pub dim: usize,
    pub log_field: Vec<f64>,
    /// `∫ |∇u|^p` over the meshed region, as a log.
    pub log_energy: f64,
    pub log_capacity: f64,
    pub residual_weak: f64,
    pub iterations: Vec<IterRecord>,
    pub eps_final: f64,
    pub exhaustion: Vec<ExhaustionMember>,
    /// Largest relative violation of the comparison between consecutive exhaustion members.
    pub monotonicity_defect: f64,
    /// Largest excursion of a potential outside its boundary values.
    pub max_principle_defect: f64,
    pub collar_radius: f64,
    /// Whether the exterior of the mesh was completed with the background model.
    pub completed: bool,
}

impl SolveReport {
    pub fn field(&self) -> Vec<f64> {
        self.log_field.iter().map(|l| l.exp()).collect()
    }

    pub fn energy(&self) -> f64 {
        self.log_energy.exp()
    }

    pub fn capacity(&self) -> f64 {
        self.log_capacity.exp()
    }

    /// Log of the kernel inside the collar, from the Euclidean asymptote matched at the collar.
    pub fn pole_log_value(&self, dom: &Domain, r: f64) -> Result<f64> {
        if self.kind != FieldKind::Kernel {
            return Err(Error::Precondition("pole values are defined for kernels only".into()));
        }
        if !(r > 0.0) || r > self.collar_radius {
            return Err(Error::Range(format!("pole extrapolation needs 0 < r ≤ {}", self.collar_radius)));
        }
        let collar = dom.tag(TAG_COLLAR)?;
        let lc = log_sum_exp(&collar.iter().map(|&v| self.log_field[v]).collect::<Vec<_>>()) - (collar.len() as f64).ln();
        let a = log_mu_euclidean(self.dim, self.p, r)?;
        let b = log_mu_euclidean(self.dim, self.p, self.collar_radius)?;
        // G(r) = G_c + μ(r) − μ(ε)
        Ok(log_add_exp(lc, crate::quad::log_sub_exp(a, b)))
    }
}

/// Right-hand side of the weak form.
#[derive(Clone, Debug, PartialEq)]
pub enum WeakRhs {
    /// p-harmonic away from the vertices of the named tags.
    Zero { fixed: Vec<String> },
    /// Unit point source at the pole: p-harmonic off the collar and the outer boundary, with unit
    /// flux through the collar.
    DiracAtCollar,
}

fn tag_set(dom: &Domain, names: &[&str]) -> Result<Vec<bool>> {
    let mut s = vec![false; dom.n_vertices()];
    for n in names {
        for &v in dom.tag(n)? {
            s[v] = true;
        }
    }
    Ok(s)
}

/// Max over hat-function tests of the normalized weak residual of `Δ_p u = rhs`; `log_field` is `log u`.
pub fn weak_residual_log(dom: &Domain, log_field: &[f64], p: f64, rhs: &WeakRhs) -> Result<f64> {
    dom.check_field(log_field)?;
    if log_field.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::Domain("field is not finite".into()));
    }
    let names: Vec<&str> = match rhs {
        WeakRhs::Zero { fixed } => fixed.iter().map(|s| s.as_str()).collect(),
        WeakRhs::DiracAtCollar => vec![TAG_COLLAR, TAG_OUTER],
    };
    let skip = tag_set(dom, &names)?;
    let tests: Vec<usize> = (0..dom.n_vertices()).filter(|&v| !skip[v] && log_field[v].is_finite()).collect();
    let mut res = tests.par_iter().map(|&i| row_residual(dom, p, i, log_field, 1e-300).0.abs()).reduce(|| 0.0, f64::max);
    if *rhs == WeakRhs::DiracAtCollar {
        let collar = dom.tag(TAG_COLLAR)?;
        let flux: f64 = collar
            .iter()
            .map(|&c| {
                let (_, f) = row_residual(dom, p, c, log_field, 1e-300);
                ((p - 1.0) * log_field[c]).exp() * f
            })
            .sum();
        res = res.max((flux - 1.0).abs());
    }
    Ok(res)
}

/// Same as [`weak_residual_log`] for a field given by value; nonpositive values are allowed.
pub fn weak_residual(dom: &Domain, field: &[f64], p: f64, rhs: &WeakRhs) -> Result<f64> {
    dom.check_field(field)?;
    if field.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("field is not finite".into()));
    }
    if field.iter().all(|&x| x >= 0.0) {
        let l: Vec<f64> = field.iter().map(|x| x.ln()).collect();
        return weak_residual_log(dom, &l, p, rhs);
    }
    let names: Vec<&str> = match rhs {
        WeakRhs::Zero { fixed } => fixed.iter().map(|s| s.as_str()).collect(),
        WeakRhs::DiracAtCollar => vec![TAG_COLLAR, TAG_OUTER],
    };
    let skip = tag_set(dom, &names)?;
    let cx = dom.complex();
    let row = |i: usize| {
        let (mut f, mut n) = (0.0, 0.0);
        for &c in &cx.vertex_cells[i] {
            let cell = &cx.cells[c];
            let g = cell.gradient(field);
            let a = cell.vertices().iter().position(|&w| w == i).unwrap();
            let gi = cell.grads[a];
            let s = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if s > 0.0 {
                f += cell.measure * s.powf(p - 2.0) * (g[0] * gi[0] + g[1] * gi[1]);
                n += cell.measure * s.powf(p - 1.0) * (gi[0] * gi[0] + gi[1] * gi[1]).sqrt();
            }
        }
        (f, n)
    };
    let mut res: f64 = 0.0;
    for i in (0..dom.n_vertices()).filter(|&v| !skip[v]) {
        let (f, n) = row(i);
        if n > 0.0 {
            res = res.max((f / n).abs());
        }
    }
    if *rhs == WeakRhs::DiracAtCollar {
        let flux: f64 = dom.tag(TAG_COLLAR)?.iter().map(|&c| row(c).0).sum();
        res = res.max((flux - 1.0).abs());
    }
    Ok(res)
}

/// `w_p = (1 − p) log u`.
pub fn log_transform(report: &SolveReport) -> Result<Vec<f64>> {
    report
        .log_field
        .iter()
        .enumerate()
        .map(|(v, &l)| {
            if l.is_finite() {
                Ok((1.0 - report.p) * l)
            } else {
                Err(Error::Domain(format!("field is not positive at vertex {v}")))
            }
        })
        .collect()
}

/// Log of `∫ |∇u|^p` over all cells.
fn log_p_energy(dom: &Domain, l: &[f64], p: f64) -> f64 {
    let terms: Vec<f64> = dom.cells().iter().map(|c| c.measure.ln() + p * log_grad_norm(c, l)).collect();
    log_sum_exp(&terms)
}

/// Median of `|∇ log u|` over cells with a finite value.
fn gradient_scale(dom: &Domain, l: &[f64]) -> f64 {
    let mut s: Vec<f64> = dom
        .cells()
        .iter()
        .filter_map(|c| {
            let lmax = c.vertices().iter().map(|&v| l[v]).fold(f64::NEG_INFINITY, f64::max);
            let g = (log_grad_norm(c, l) - lmax).exp();
            (g.is_finite() && g > 0.0).then_some(g)
        })
        .collect();
    if s.is_empty() {
        return 1.0 / dom.mesh_size();
    }
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn check_p(dom: &Domain, p: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("p must be > 1, got {p}")));
    }
    if p > dom.dim() as f64 {
        return Err(Error::Domain(format!("p = {p} exceeds the dimension {}", dom.dim())));
    }
    Ok(())
}

/// Initial `log u` for a capacitor: the model potential of the same annulus transplanted along
/// `radii`, or a linear profile without a background model.
fn transplant(dom: &Domain, p: f64, radii: &[f64], inner: f64, outer: f64) -> Vec<f64> {
    let kern = dom
        .background()
        .filter(|m| m.r_inf().is_none_or(|ri| outer < ri))
        .and_then(|m| ModelKernel::new(m.clone(), p, outer).ok());
    let l_in = kern.as_ref().and_then(|k| k.log_value(inner).ok());
    radii
        .iter()
        .map(|&s| {
            let s = s.clamp(inner, outer);
            match (&kern, l_in) {
                (Some(k), Some(li)) if s < outer => k.log_value(s).map(|l| (l - li).min(0.0)).unwrap_or(f64::NEG_INFINITY),
                _ => ((outer - s) / (outer - inner)).ln(),
            }
        })
        .map(|l| if l.is_finite() { l } else { -700.0 })
        .collect()
}

fn potential_report(dom: &Domain, p: f64, out: solver::Outcome, fixed_names: Vec<String>) -> Result<SolveReport> {
    let l = out.log_u;
    let log_energy = log_p_energy(dom, &l, p);
    let residual_weak = weak_residual_log(dom, &l, p, &WeakRhs::Zero { fixed: fixed_names })?;
    let max_principle_defect = l.iter().filter(|x| x.is_finite()).fold(0.0f64, |a, &x| a.max(x.exp() - 1.0));
    Ok(SolveReport {
        kind: FieldKind::Potential,
        p,
        dim: dom.dim(),
        log_field: l,
        log_energy,
        log_capacity: log_energy,
        residual_weak,
        iterations: out.trace,
        eps_final: out.eps_final,
        exhaustion: Vec::new(),
        monotonicity_defect: 0.0,
        max_principle_defect,
        collar_radius: dom.collar_radius(),
        completed: false,
    })
}

fn solve_fixed(dom: &Domain, cfg: &PSolveConfig, fixed: Vec<Option<f64>>, init: Vec<f64>) -> Result<solver::Outcome> {
    let sys = System::new(dom, cfg.p, fixed)?;
    let mut l0 = init;
    sys.apply_fixed(&mut l0);
    let g0 = gradient_scale(dom, &l0);
    sys.solve(l0, &cfg.settings(g0))
}

/// Capacity potential of the condenser `(K, Ω)`: `u = 1` on the `k_tag` vertices, `u = 0` on the
/// `outer_tag` vertices, p-harmonic elsewhere. The capacity is the energy `∫|∇u|^p`.
pub fn capacity_potential(dom: &Domain, k_tag: &str, outer_tag: &str, cfg: &PSolveConfig) -> Result<SolveReport> {
    capacity_potential_from(dom, k_tag, outer_tag, cfg, None)
}

/// As [`capacity_potential`], starting from `initial` (`log u`) when given.
pub fn capacity_potential_from(
    dom: &Domain,
    k_tag: &str,
    outer_tag: &str,
    cfg: &PSolveConfig,
    initial: Option<&[f64]>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let k = dom.tag(k_tag)?;
    let o = dom.tag(outer_tag)?;
    if k.is_empty() || o.is_empty() {
        return Err(Error::Degenerate("capacitor boundary tags must be non-empty".into()));
    }
    let mut fixed = vec![None; dom.n_vertices()];
    for &v in o {
        fixed[v] = Some(f64::NEG_INFINITY);
    }
    for &v in k {
        if fixed[v].is_some() {
            return Err(Error::Degenerate(format!("vertex {v} lies on both capacitor boundaries")));
        }
        fixed[v] = Some(0.0);
    }
    let r = dom.distance();
    let inner = k.iter().map(|&v| r[v]).fold(f64::NEG_INFINITY, f64::max);
    let outer = o.iter().map(|&v| r[v]).fold(f64::INFINITY, f64::min);
    let init = match initial {
        Some(l) => {
            dom.check_field(l)?;
            l.to_vec()
        }
        None if outer > inner => transplant(dom, cfg.p, r, inner, outer),
        None => vec![-1.0; dom.n_vertices()],
    };
    let out = solve_fixed(dom, cfg, fixed, init)?;
    potential_report(dom, cfg.p, out, vec![k_tag.to_string(), outer_tag.to_string()])
}

/// Log of the background model kernel at chart radius `t`, when the background is non-parabolic.
fn background_tail(dom: &Domain, p: f64) -> Option<ModelKernel> {
    let m = dom.background()?;
    match m.nonparabolic(p) {
        Ok(true) => ModelKernel::entire(m.clone(), p).ok(),
        _ => None,
    }
}

/// Extends a potential on the meshed region to the whole manifold: on the mesh, `u = c + (1 − c) û`
/// with `c` chosen so that the flux matches the background model kernel outside the mesh.
pub fn complete_potential(dom: &Domain, report: &SolveReport, outer_tag: &str) -> Result<SolveReport> {
    if report.kind != FieldKind::Potential {
        return Err(Error::Precondition("exterior completion applies to potentials".into()));
    }
    let kern = background_tail(dom, report.p)
        .ok_or_else(|| Error::Parabolic { p: report.p })?;
    let o = dom.tag(outer_tag)?;
    let t = dom.chart_t();
    let t_out = o.iter().map(|&v| t[v]).sum::<f64>() / o.len() as f64;
    // γ = cap^{1/(p-1)} G^h(T);  c = γ / (1 + γ)
    let log_gamma = report.log_capacity / (report.p - 1.0) + kern.log_value(t_out)?;
    let log_c = -softplus(-log_gamma);
    let log_b = -softplus(log_gamma);
    let mut out = report.clone();
    out.log_field = report.log_field.iter().map(|&l| log_add_exp(log_c, log_b + l)).collect();
    out.completed = true;
    Ok(out)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Default exhaustion radii from the configured fractions of the outer chart radius.
pub fn default_exhaustion(dom: &Domain, cfg: &PSolveConfig) -> Vec<f64> {
    let t_max = dom.chart_t().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    cfg.exhaustion.iter().map(|f| f * t_max).collect()
}

/// Green kernel with pole at the collar centre, by exhaustion with capacity potentials of
/// `(collar, {t < R_j})`, each rescaled to unit flux and completed outside with the background
/// model kernel when the background is non-parabolic.
pub fn green_kernel_numeric(dom: &Domain, cfg: &PSolveConfig, exhaustion: &[f64]) -> Result<SolveReport> {
    green_kernel_from(dom, cfg, exhaustion, None)
}

/// As [`green_kernel_numeric`], transplanting the initial guesses along `radii` (per-vertex model
/// radii, e.g. a fake distance from a nearby exponent) instead of the distance to the pole.
pub fn green_kernel_from(dom: &Domain, cfg: &PSolveConfig, exhaustion: &[f64], radii: Option<&[f64]>) -> Result<SolveReport> {
    cfg.validate()?;
    let p = cfg.p;
    check_p(dom, p)?;
    if p >= dom.dim() as f64 {
        return Err(Error::Domain(format!("kernels need p < m = {}", dom.dim())));
    }
    let collar = dom.tag(TAG_COLLAR)?.to_vec();
    if collar.is_empty() {
        return Err(Error::Precondition("the domain has no pole collar".into()));
    }
    let t = dom.chart_t();
    let t_max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut radii_sorted: Vec<f64> = if exhaustion.is_empty() { default_exhaustion(dom, cfg) } else { exhaustion.to_vec() };
    radii_sorted.sort_by(f64::total_cmp);
    radii_sorted.dedup();
    // effective member radius: the smallest chart radius at or beyond the requested one
    let eff: Vec<f64> = radii_sorted
        .iter()
        .map(|&r| t.iter().cloned().filter(|&x| x >= r - 1e-12 * t_max.abs()).fold(f64::INFINITY, f64::min))
        .collect::<Vec<_>>();
    if eff.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain(format!("exhaustion radius beyond the mesh (max chart radius {t_max})")));
    }
    let mut eff = eff;
    eff.dedup();
    let tail = background_tail(dom, p);
    let dist = radii.unwrap_or(dom.distance()).to_vec();
    if dist.len() != dom.n_vertices() {
        return Err(Error::Domain("transplant radii do not match the vertex count".into()));
    }
    let eps = dom.collar_radius();

    let members: Vec<Result<(f64, Vec<f64>, f64, solver::Outcome)>> = eff
        .par_iter()
        .map(|&rj| {
            let mut fixed = vec![None; dom.n_vertices()];
            for v in 0..dom.n_vertices() {
                if t[v] >= rj - 1e-12 * rj {
                    fixed[v] = Some(f64::NEG_INFINITY);
                }
            }
            for &v in &collar {
                fixed[v] = Some(0.0);
            }
            let init = transplant(dom, p, &dist, eps, rj);
            let out = solve_fixed(dom, cfg, fixed, init)?;
            let log_cap = log_p_energy(dom, &out.log_u, p);
            // unit flux: G = cap^{-1/(p-1)} u (+ model tail beyond R_j)
            let lt = match &tail {
                Some(k) => k.log_value(rj)?,
                None => f64::NEG_INFINITY,
            };
            let scale = -log_cap / (p - 1.0);
            let raw: Vec<f64> = out.log_u.iter().map(|&l| scale + l).collect();
            let g: Vec<f64> = (0..dom.n_vertices())
                .map(|v| {
                    if t[v] < rj - 1e-12 * rj {
                        log_add_exp(raw[v], lt)
                    } else {
                        match &tail {
                            Some(k) => k.log_value(t[v].max(1e-300)).unwrap_or(lt),
                            None => f64::NEG_INFINITY,
                        }
                    }
                })
                .collect();
            Ok((log_cap, g, rj, out))
        })
        .collect();
    let members: Vec<(f64, Vec<f64>, f64, solver::Outcome)> = members.into_iter().collect::<Result<_>>()?;

    let r0 = eff[0];
    let inner: Vec<usize> = (0..dom.n_vertices()).filter(|&v| t[v] < r0 - 1e-12 * r0).collect();
    let mut records = Vec::new();
    let mut mono: f64 = 0.0;
    let mut last_change = None;
    for (j, (log_cap, g, rj, _)) in members.iter().enumerate() {
        let mut change = None;
        if j > 0 {
            let prev = &members[j - 1];
            let mut sup: f64 = 0.0;
            for &v in &inner {
                sup = sup.max((p - 1.0) * (g[v] - prev.1[v]).abs());
                // raw members (without the tail) are nested by comparison
                let a = prev.0 / (1.0 - p) + prev.3.log_u[v];
                let b = log_cap / (1.0 - p) + members[j].3.log_u[v];
                mono = mono.max((a - b).exp_m1());
            }
            change = Some(sup);
            last_change = Some((j, sup));
        }
        records.push(ExhaustionMember { radius: *rj, log_capacity: *log_cap, sup_change: change });
    }
    if mono > 1e-3 {
        return Err(Error::NotMonotone(format!("exhaustion members violate comparison by {mono:.3e}")));
    }
    if let Some((j, sup)) = last_change {
        if sup > cfg.exhaustion_tol {
            let before = records[j - 1].sup_change.map_or("n/a".to_string(), |s| format!("{s:.3e}"));
            return Err(Error::NonConvergence(format!(
                "exhaustion is not Cauchy: sup-norm changes of (p-1) log G {before} then {sup:.3e} (tolerance {:.1e}); the geometry may be parabolic",
                cfg.exhaustion_tol
            )));
        }
    }
    let (log_cap, g, _, out) = members.into_iter().last().unwrap();
    let log_energy = log_p_energy(dom, &g, p);
    let residual_weak = weak_residual_log(dom, &g, p, &WeakRhs::DiracAtCollar)?;
    Ok(SolveReport {
        kind: FieldKind::Kernel,
        p,
        dim: dom.dim(),
        log_field: g,
        log_energy,
        log_capacity: log_cap,
        residual_weak,
        iterations: out.trace,
        eps_final: out.eps_final,
        exhaustion: records,
        monotonicity_defect: mono.max(0.0),
        max_principle_defect: 0.0,
        collar_radius: eps,
        completed: tail.is_some(),
    })
}
