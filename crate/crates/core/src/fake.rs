//! Fake distance: the reparametrization of a numeric kernel by a model kernel, and the audits of
//! its gradient bounds.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::audit::EstimateAudit;
use crate::error::{Error, Result};
use crate::geom::{Cell, Domain, TAG_COLLAR, TAG_OUTER};
use crate::model::{CurvatureProfile, ModelKernel, ModelManifold};
use crate::psolve::{FieldKind, SolveReport};
use crate::quad::gl8;

/// Slope of the discretization budget in the mesh size.
pub const TOL_H: f64 = 5.0;
/// Multiple of the solver residual added to every gradient tolerance.
pub const TOL_SOLVER: f64 = 10.0;
/// Hop layers around the collar and the outer boundary left out of gradient audits.
pub const COLLAR_LAYERS: usize = 3;
pub const OUTER_LAYERS: usize = 2;

#[derive(Clone, Debug, Serialize)]
pub struct FakeDistanceField {
    pub p: f64,
    pub rho: Vec<f64>,
    /// Log of the source kernel at every vertex.
    pub log_kernel: Vec<f64>,
    /// Vertices whose radius came from the analytic tail of the model kernel.
    pub extrapolated: usize,
    /// Weak residual of the source kernel.
    pub solver_residual: f64,
    pub mesh: String,
    #[serde(skip)]
    pub model: ModelKernel,
}

/// `ρ` with `𝒢^h(ρ) = 𝒢` at every vertex, where `𝒢^h` is the entire kernel of `model`.
pub fn fake_distance(dom: &Domain, kernel: &SolveReport, model: &ModelKernel) -> Result<FakeDistanceField> {
    if kernel.kind != FieldKind::Kernel {
        return Err(Error::Precondition("the fake distance needs a Green kernel".into()));
    }
    if model.radius().is_finite() {
        return Err(Error::Precondition("the model kernel must be the entire kernel".into()));
    }
    if (model.p() - kernel.p).abs() > 1e-12 {
        return Err(Error::Precondition(format!("kernel p = {} but model p = {}", kernel.p, model.p())));
    }
    if model.model().dim() != kernel.dim {
        return Err(Error::Precondition("model and kernel dimensions differ".into()));
    }
    dom.check_field(&kernel.log_field)?;
    let inv: Vec<_> = kernel.log_field.par_iter().map(|&l| model.invert_log(l)).collect::<Result<_>>()?;
    Ok(FakeDistanceField {
        p: kernel.p,
        rho: inv.iter().map(|i| i.t.max(0.0)).collect(),
        log_kernel: kernel.log_field.clone(),
        extrapolated: inv.iter().filter(|i| i.extrapolated).count(),
        solver_residual: kernel.residual_weak,
        mesh: dom.id(),
        model: model.clone(),
    })
}

impl FakeDistanceField {
    /// Largest relative error of `𝒢^h(ρ) = 𝒢` over the vertices.
    pub fn round_trip_defect(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (&r, &l) in self.rho.iter().zip(&self.log_kernel) {
            if r > 0.0 {
                worst = worst.max((self.model.log_value(r)? - l).exp_m1().abs());
            }
        }
        Ok(worst)
    }

    /// Gradient tolerance `c₁ h + c₂ · solver residual`.
    pub fn gradient_tolerance(&self, dom: &Domain) -> f64 {
        TOL_H * dom.mesh_size() + TOL_SOLVER * self.solver_residual
    }
}

fn audit_cells(dom: &Domain) -> Vec<bool> {
    dom.cells_outside_bands(&[(TAG_COLLAR, COLLAR_LAYERS), (TAG_OUTER, OUTER_LAYERS)])
}

fn norm(g: [f64; 2]) -> f64 {
    (g[0] * g[0] + g[1] * g[1]).sqrt()
}

/// `max |∇ρ| ≤ 1` over the cells away from the collar and the outer boundary.
/// The location is the first vertex of the worst cell.
pub fn check_gradient_bound(dom: &Domain, fd: &FakeDistanceField) -> Result<EstimateAudit> {
    dom.check_field(&fd.rho)?;
    let keep = audit_cells(dom);
    let tol = fd.gradient_tolerance(dom);
    let samples: Vec<_> = dom
        .cells()
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(c, _)| (c.verts[0], norm(c.gradient(&fd.rho)), 1.0, tol))
        .collect();
    Ok(EstimateAudit::inequality("gradient-bound", samples).with_p(fd.p).with_mesh(dom.id()))
}

/// Largest `|∇ρ|` over audited cells whose vertices all have chart radius in `[a, b]`.
pub fn max_gradient_in(dom: &Domain, fd: &FakeDistanceField, a: f64, b: f64) -> f64 {
    let keep = audit_cells(dom);
    let t = dom.chart_t();
    dom.cells()
        .iter()
        .zip(&keep)
        .filter(|(c, k)| **k && c.vertices().iter().all(|&v| (a..=b).contains(&t[v])))
        .map(|(c, _)| norm(c.gradient(&fd.rho)))
        .fold(0.0, f64::max)
}

/// `ρ ≤ r` at every vertex, with tolerance `c₁ h`.
pub fn check_upper_bound_r(dom: &Domain, fd: &FakeDistanceField) -> Result<EstimateAudit> {
    dom.check_field(&fd.rho)?;
    let tol = TOL_H * dom.mesh_size();
    let r = dom.distance();
    let samples: Vec<_> = (0..dom.n_vertices()).map(|v| (v, fd.rho[v], r[v], tol)).collect();
    Ok(EstimateAudit::inequality("rho-below-distance", samples).with_p(fd.p).with_mesh(dom.id()))
}

/// Quadrature nodes `(weight · φ_i, ρ)` of `∫_cell (·) φ_i dV` for the hat function of local vertex `a`.
fn hat_quadrature(dom: &Domain, cell: &Cell, a: usize, rho: &[f64]) -> Vec<(f64, f64)> {
    match dom {
        Domain::Radial(g) if cell.nv == 2 => {
            let (v0, v1) = (cell.verts[0], cell.verts[1]);
            let (t0, t1) = (g.nodes[v0], g.nodes[v1]);
            gl8(t0, t1)
                .iter()
                .map(|&(t, w)| {
                    let s = (t - t0) / (t1 - t0);
                    let phi = if a == 0 { 1.0 - s } else { s };
                    (w * g.model.log_v(t).exp() * phi, rho[v0] * (1.0 - s) + rho[v1] * s)
                })
                .collect()
        }
        _ => {
            // edge midpoints: exact for quadratics on the triangle
            let v = cell.vertices();
            let mut out = Vec::with_capacity(2);
            for b in 0..cell.nv {
                if b != a {
                    out.push((cell.measure / 3.0 * 0.5, 0.5 * (rho[v[a]] + rho[v[b]])));
                }
            }
            out
        }
    }
}

/// Weak residual of `Δ_p ψ(ρ) = [v_h^{-1}(v_h |ψ'|^{p-2} ψ')'](ρ) |∇ρ|^p`, normalized per hat test
/// and maximized over tests whose support avoids the collar and outer bands.
/// `psi(t)` returns `[ψ, ψ', ψ'']`.
pub fn pde_residual_composite<F>(dom: &Domain, fd: &FakeDistanceField, psi: F) -> Result<f64>
where
    F: Fn(f64) -> [f64; 3] + Sync,
{
    dom.check_field(&fd.rho)?;
    let p = fd.p;
    let model = fd.model.model().clone();
    let keep = audit_cells(dom);
    let cx = dom.complex();
    let u: Vec<f64> = fd.rho.iter().map(|&r| psi(r)[0]).collect();
    let source = |s: f64| {
        let [_, d1, d2] = psi(s);
        let a = d1.abs().powf(p - 2.0);
        a * d1 * model.mean_curvature(s) + (p - 1.0) * a * d2
    };
    let tests: Vec<usize> = (0..dom.n_vertices())
        .filter(|&v| !cx.vertex_cells[v].is_empty() && cx.vertex_cells[v].iter().all(|&c| keep[c]))
        .collect();
    let worst = tests
        .par_iter()
        .map(|&i| {
            let (mut res, mut nrm) = (0.0, 0.0);
            for &c in &cx.vertex_cells[i] {
                let cell = &cx.cells[c];
                let a = cell.vertices().iter().position(|&w| w == i).unwrap();
                let gu = cell.gradient(&u);
                let gr = norm(cell.gradient(&fd.rho));
                let su = norm(gu);
                let gi = cell.grads[a];
                if su > 0.0 {
                    res += cell.measure * su.powf(p - 2.0) * (gu[0] * gi[0] + gu[1] * gi[1]);
                    nrm += cell.measure * su.powf(p - 1.0) * norm(gi);
                }
                for (w, s) in hat_quadrature(dom, cell, a, &fd.rho) {
                    let f = source(s) * gr.powf(p) * w;
                    res += f;
                    nrm += f.abs();
                }
            }
            if nrm > 0.0 {
                (res / nrm).abs()
            } else {
                0.0
            }
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Weak residual of `Δ_p ρ = (v_h'/v_h)(ρ) |∇ρ|^p`.
pub fn pde_residual_rho(dom: &Domain, fd: &FakeDistanceField) -> Result<f64> {
    pde_residual_composite(dom, fd, |t| [t, 1.0, 0.0])
}

/// Boundary contribution to the sharp gradient estimate.
#[derive(Clone, Copy, Debug)]
pub enum BoundaryTerm<'a> {
    /// No boundary (the field lives on the whole manifold).
    Absent,
    Given(f64),
    /// Measured as the largest `|∇ log u|` on cells touching the named tags; those cells are
    /// then excluded from the interior maximum.
    Measured(&'a [&'a str]),
}

/// `max |∇ log u| ≤ max{(m − 1)κ/(p − 1), boundary term}` over interior cells, with a 1% tolerance.
pub fn check_sharp_gradient_estimate(
    dom: &Domain,
    log_u: &[f64],
    p: f64,
    kappa: f64,
    boundary: BoundaryTerm,
) -> Result<EstimateAudit> {
    dom.check_field(log_u)?;
    if !(p > 1.0) || !(kappa >= 0.0) {
        return Err(Error::Domain(format!("need p > 1 and κ ≥ 0, got p = {p}, κ = {kappa}")));
    }
    let finite = |c: &Cell| c.vertices().iter().all(|&v| log_u[v].is_finite());
    let mut on_boundary = vec![false; dom.cells().len()];
    let b = match boundary {
        BoundaryTerm::Absent => 0.0,
        BoundaryTerm::Given(b) => b,
        BoundaryTerm::Measured(tags) => {
            let mut mark = vec![false; dom.n_vertices()];
            for t in tags {
                for &v in dom.tag(t)? {
                    mark[v] = true;
                }
            }
            let mut b: f64 = 0.0;
            for (k, c) in dom.cells().iter().enumerate() {
                if c.vertices().iter().any(|&v| mark[v]) {
                    on_boundary[k] = true;
                    if finite(c) {
                        b = b.max(norm(c.gradient(log_u)));
                    } else {
                        b = f64::INFINITY;
                    }
                }
            }
            b
        }
    };
    let m = dom.dim() as f64;
    let rhs = ((m - 1.0) * kappa / (p - 1.0)).max(b);
    let tol = 1e-2 * rhs + 1e-12;
    let samples: Vec<_> = dom
        .cells()
        .iter()
        .enumerate()
        .filter(|(k, c)| !on_boundary[*k] && finite(c))
        .map(|(_, c)| (c.verts[0], norm(c.gradient(log_u)), rhs, tol))
        .collect();
    Ok(EstimateAudit::inequality("sharp-gradient-estimate", samples).with_p(p).with_mesh(dom.id()))
}

/// `|(log 𝒢^κ_{R+τ})'(R)|` for the constant-curvature model `H ≡ κ²` of dimension `m`
/// (`τ = None`: entire kernel).
pub fn barrier_slope(m: usize, p: f64, kappa: f64, r: f64, tau: Option<f64>) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Precondition(format!("interior ball radius must be > 0, got {r}")));
    }
    let outer = tau.map(|t| r + t);
    let t_max = 2.0 * outer.unwrap_or(r) + 10.0;
    let model = Arc::new(ModelManifold::new(m, CurvatureProfile::constant(kappa * kappa), t_max)?);
    let k = match outer {
        Some(s) => ModelKernel::new(model, p, s)?,
        None => ModelKernel::entire(model, p)?,
    };
    Ok(k.log_derivative(r)?.abs())
}

/// Boundary barrier at the vertices `x` of `∂K` with interior ball radii `R_x`:
/// `|∇ log u| ≤ |(log 𝒢^κ_{R_x+τ})'(R_x)|` on the cells at `x` that leave `K`.
pub fn check_boundary_barrier(
    dom: &Domain,
    potential: &SolveReport,
    k_tag: &str,
    r_x: &[(usize, f64)],
    tau: Option<f64>,
    kappa: f64,
) -> Result<EstimateAudit> {
    if potential.kind != FieldKind::Potential {
        return Err(Error::Precondition("the boundary barrier applies to capacity potentials".into()));
    }
    if let Some(&(v, r)) = r_x.iter().find(|(_, r)| !(*r > 0.0)) {
        return Err(Error::Precondition(format!("interior ball radius at vertex {v} must be > 0, got {r}")));
    }
    if tau.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::Precondition("τ must be > 0".into()));
    }
    let n = dom.n_vertices();
    let mut in_k = vec![false; n];
    for &v in dom.tag(k_tag)? {
        in_k[v] = true;
    }
    let cx = dom.complex();
    let h = dom.mesh_size();
    let l = &potential.log_field;
    let mut samples = Vec::with_capacity(r_x.len());
    for &(x, r) in r_x {
        if x >= n {
            return Err(Error::Domain(format!("vertex {x} out of range")));
        }
        let rhs = barrier_slope(dom.dim(), potential.p, kappa, r, tau)?;
        let lhs = cx.vertex_cells[x]
            .iter()
            .map(|&c| &cx.cells[c])
            .filter(|c| c.vertices().iter().any(|&v| !in_k[v]) && c.vertices().iter().all(|&v| l[v].is_finite()))
            .map(|c| norm(c.gradient(l)))
            .fold(0.0, f64::max);
        samples.push((x, lhs, rhs, TOL_H * h / r * rhs));
    }
    Ok(EstimateAudit::inequality("boundary-barrier", samples).with_p(potential.p).with_mesh(dom.id()))
}

#[cfg(test)]
mod tests;
