//! Log-coordinate solver for `Δ_p u = 0` with Dirichlet data.
//!
//! Unknowns are `L = log u` at the free vertices. Rows of the discrete equation are divided by
//! `u_i^{p-1}`, so every quantity is formed from ratios `u_k/u_i` of neighbouring values and the
//! solver is indifferent to the overall scale of `u`, which for `p` near 1 spans many decades.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::banded::{cuthill_mckee, BandMatrix};
use crate::error::{Error, Result};
use crate::geom::{Cell, Domain};
use crate::quad::log_sum_exp;

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Irls,
    Newton,
}

/// One iteration of the solver trace.
#[derive(Clone, Debug, Serialize)]
pub struct IterRecord {
    pub phase: Phase,
    /// Absolute regularization (zero in the Newton phase).
    pub eps: f64,
    /// Log of the regularized energy at the accepted iterate.
    pub log_energy: f64,
    /// Max normalized weak residual at the accepted iterate.
    pub residual: f64,
    pub step: f64,
}

pub(crate) struct Settings {
    pub eps: Vec<f64>,
    pub tol_energy: f64,
    pub tol_grad: f64,
    pub max_iters: usize,
    pub max_newton: usize,
    pub linear_tol: f64,
    pub deadline: Option<Instant>,
}

pub(crate) struct Outcome {
    pub log_u: Vec<f64>,
    pub trace: Vec<IterRecord>,
    pub eps_final: f64,
}

/// Dirichlet problem on a domain: `fixed[v]` holds the prescribed `log u` (possibly `-inf`).
pub(crate) struct System<'a> {
    dom: &'a Domain,
    p: f64,
    fixed: Vec<Option<f64>>,
    free: Vec<usize>,
    pos: Vec<usize>,
    bw: usize,
    floor2: f64,
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn local(cell: &Cell, v: usize) -> usize {
    cell.verts[..cell.nv].iter().position(|&w| w == v).unwrap()
}

/// `∇u / u_i` on a cell, with `u_k / u_i = exp(L_k - L_i)`.
#[inline]
fn rel_gradient(cell: &Cell, a: usize, l: &[f64]) -> ([f64; 2], [f64; 3]) {
    let li = l[cell.verts[a]];
    let mut g = [0.0; 2];
    let mut e = [0.0; 3];
    for k in 0..cell.nv {
        let d = l[cell.verts[k]] - li;
        e[k] = d.exp();
        let w = d.exp_m1();
        g[0] += w * cell.grads[k][0];
        g[1] += w * cell.grads[k][1];
    }
    (g, e)
}

/// Log of the norm of `∇u` on a cell (`-inf` for a constant or vanishing interpolant).
pub(crate) fn log_grad_norm(cell: &Cell, l: &[f64]) -> f64 {
    let lmax = cell.vertices().iter().map(|&v| l[v]).fold(f64::NEG_INFINITY, f64::max);
    if lmax == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut g = [0.0; 2];
    for k in 0..cell.nv {
        let w = (l[cell.verts[k]] - lmax).exp();
        g[0] += w * cell.grads[k][0];
        g[1] += w * cell.grads[k][1];
    }
    lmax + 0.5 * dot(g, g).ln()
}

/// Normalized weak residual of row `i` (`F_i / N_i`) and `F_i` itself, rows scaled by `u_i^{1-p}`.
pub(crate) fn row_residual(dom: &Domain, p: f64, i: usize, l: &[f64], floor2: f64) -> (f64, f64) {
    let cx = dom.complex();
    let mut f = 0.0;
    let mut n = 0.0;
    for &c in &cx.vertex_cells[i] {
        let cell = &cx.cells[c];
        let a = local(cell, i);
        let (g, _) = rel_gradient(cell, a, l);
        let s2 = dot(g, g) + floor2;
        let w = s2.powf(0.5 * (p - 2.0));
        let gi = cell.grads[a];
        f += cell.measure * w * dot(g, gi);
        n += cell.measure * w * s2.sqrt() * dot(gi, gi).sqrt();
    }
    let r = if n > 0.0 { f / n } else { 0.0 };
    (r, f)
}

impl<'a> System<'a> {
    pub fn new(dom: &'a Domain, p: f64, fixed: Vec<Option<f64>>) -> Result<Self> {
        let n = dom.n_vertices();
        let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
        if free.is_empty() {
            return Err(Error::Degenerate("no free vertices between the boundary sets".into()));
        }
        let mut idx = vec![NONE; n];
        for (k, &v) in free.iter().enumerate() {
            idx[v] = k;
        }
        let nb = dom.complex().neighbours();
        let adj: Vec<Vec<usize>> = free
            .iter()
            .map(|&v| nb[v].iter().filter(|&&w| idx[w] != NONE).map(|&w| idx[w]).collect())
            .collect();
        // start the level structure at the free vertices touching finite Dirichlet data
        let start: Vec<usize> = free
            .iter()
            .enumerate()
            .filter(|(_, &v)| nb[v].iter().any(|&w| matches!(fixed[w], Some(x) if x.is_finite())))
            .map(|(k, _)| k)
            .collect();
        let natural: Vec<usize> = (0..free.len()).collect();
        let bw_nat = BandMatrix::bandwidth_of(&adj, &natural);
        let cm = cuthill_mckee(&adj, if start.is_empty() { &[0] } else { &start });
        let mut cm_pos = vec![0; free.len()];
        for (k, &q) in cm.iter().enumerate() {
            cm_pos[q] = k;
        }
        let bw_cm = BandMatrix::bandwidth_of(&adj, &cm_pos);
        let (order, bw) = if bw_cm < bw_nat { (cm.iter().map(|&q| free[q]).collect(), bw_cm) } else { (free, bw_nat) };
        let mut pos = vec![NONE; n];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let h = dom.mesh_size().max(1e-300);
        Ok(System { dom, p, fixed, free: order, pos, bw, floor2: (1e-13 / h).powi(2) })
    }

    pub fn apply_fixed(&self, l: &mut [f64]) {
        for (v, f) in self.fixed.iter().enumerate() {
            if let Some(x) = f {
                l[v] = *x;
            }
        }
    }

    /// Log of `Σ μ (ε² s² + |∇u|²)^{p/2} / p`, `s = exp(sigma)` per cell.
    pub fn log_energy(&self, l: &[f64], eps: f64, sigma: &[f64]) -> f64 {
        let p = self.p;
        let terms: Vec<f64> = self
            .dom
            .cells()
            .par_iter()
            .zip(sigma.par_iter())
            .map(|(cell, &sg)| {
                let lmax = cell.vertices().iter().map(|&v| l[v]).fold(f64::NEG_INFINITY, f64::max);
                if lmax == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                let mut g = [0.0; 2];
                for k in 0..cell.nv {
                    let w = (l[cell.verts[k]] - lmax).exp();
                    g[0] += w * cell.grads[k][0];
                    g[1] += w * cell.grads[k][1];
                }
                let reg = if eps > 0.0 && sg > f64::NEG_INFINITY { (eps * (sg - lmax).exp()).powi(2) } else { 0.0 };
                let s2 = dot(g, g) + reg;
                if s2 <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                cell.measure.ln() + 0.5 * p * (2.0 * lmax + s2.ln())
            })
            .collect();
        log_sum_exp(&terms) - p.ln()
    }

    /// Max normalized residual over free vertices and the sum of squares used as merit.
    pub fn residual(&self, l: &[f64]) -> (f64, f64) {
        let rs: Vec<f64> = self.free.par_iter().map(|&i| row_residual(self.dom, self.p, i, l, self.floor2).0).collect();
        let max = rs.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let ss = rs.iter().map(|r| r * r).sum();
        (max, ss)
    }

    fn cell_sigma(&self, l: &[f64]) -> Vec<f64> {
        self.dom
            .cells()
            .iter()
            .map(|c| c.vertices().iter().map(|&v| l[v]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Row entries `(position, value)` and right-hand side of the IRLS or Newton system.
    fn assemble(&self, l: &[f64], irls: Option<(f64, &[f64])>) -> (BandMatrix, Vec<f64>) {
        let p = self.p;
        let cx = self.dom.complex();
        let rows: Vec<(Vec<(usize, f64)>, f64)> = self
            .free
            .par_iter()
            .map(|&i| {
                let mut ent: Vec<(usize, f64)> = Vec::with_capacity(8);
                let mut rhs = 0.0;
                let li = l[i];
                let push = |k: usize, v: f64, ent: &mut Vec<(usize, f64)>| {
                    if let Some(e) = ent.iter_mut().find(|e| e.0 == k) {
                        e.1 += v;
                    } else {
                        ent.push((k, v));
                    }
                };
                for &c in &cx.vertex_cells[i] {
                    let cell = &cx.cells[c];
                    let a = local(cell, i);
                    let (g, e) = rel_gradient(cell, a, l);
                    let gi = cell.grads[a];
                    match irls {
                        Some((eps, sigma)) => {
                            let reg = if sigma[c] > f64::NEG_INFINITY { (eps * (sigma[c] - li).exp()).powi(2) } else { 0.0 };
                            let w = (dot(g, g) + reg + self.floor2).powf(0.5 * (p - 2.0)) * cell.measure;
                            for k in 0..cell.nv {
                                let v = cell.verts[k];
                                let val = w * dot(gi, cell.grads[k]) * e[k];
                                if self.pos[v] != NONE {
                                    push(self.pos[v], val, &mut ent);
                                } else if val != 0.0 {
                                    rhs -= val;
                                }
                            }
                        }
                        None => {
                            let s2 = dot(g, g) + self.floor2;
                            let w = s2.powf(0.5 * (p - 2.0));
                            let w2 = (p - 2.0) * s2.powf(0.5 * (p - 4.0));
                            let ggi = dot(g, gi);
                            rhs -= cell.measure * w * ggi;
                            for k in 0..cell.nv {
                                let v = cell.verts[k];
                                if self.pos[v] == NONE {
                                    continue;
                                }
                                let dg = if k == a {
                                    [gi[0] - g[0], gi[1] - g[1]]
                                } else {
                                    [e[k] * cell.grads[k][0], e[k] * cell.grads[k][1]]
                                };
                                let val = cell.measure * (w * dot(gi, dg) + w2 * dot(g, dg) * ggi);
                                push(self.pos[v], val, &mut ent);
                            }
                        }
                    }
                }
                (ent, rhs)
            })
            .collect();
        let mut mat = BandMatrix::new(self.free.len(), self.bw);
        let mut b = vec![0.0; self.free.len()];
        for (q, (ent, rhs)) in rows.into_iter().enumerate() {
            // rows are normalized by their diagonal for a well scaled elimination
            let d = ent.iter().find(|e| e.0 == q).map(|e| e.1.abs()).filter(|d| *d > 0.0).unwrap_or(1.0);
            for (k, v) in ent {
                mat.add(q, k, v / d);
            }
            b[q] = rhs / d;
        }
        (mat, b)
    }

    fn check_deadline(&self, s: &Settings, trace: &[IterRecord]) -> Result<()> {
        if let Some(d) = s.deadline {
            if Instant::now() > d {
                return Err(Error::NonConvergence(format!(
                    "time budget exhausted after {} iterations (last residual {:.3e})",
                    trace.len(),
                    trace.last().map_or(f64::NAN, |r| r.residual)
                )));
            }
        }
        Ok(())
    }

    fn linear_solve(&self, mat: BandMatrix, b: Vec<f64>, s: &Settings) -> Result<Vec<f64>> {
        let mut x = b.clone();
        let mut lu = mat;
        // keep a copy for the residual check
        let n = lu.n();
        let check: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                (i.saturating_sub(self.bw)..(i + self.bw + 1).min(n))
                    .filter_map(|j| {
                        let v = lu.get(i, j);
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        lu.solve(&mut x)?;
        let mut rn = 0.0f64;
        let mut bn = 0.0f64;
        for i in 0..n {
            let ax: f64 = check[i].iter().map(|&(j, v)| v * x[j]).sum();
            rn = rn.max((ax - b[i]).abs());
            bn = bn.max(b[i].abs());
        }
        if rn > s.linear_tol * bn.max(1e-300) && rn > 1e-300 {
            return Err(Error::NonConvergence(format!("linear solve residual {:.3e} above tolerance", rn / bn)));
        }
        Ok(x)
    }

    /// Runs the regularized IRLS stages and then Newton on the unregularized equation.
    pub fn solve(&self, mut l: Vec<f64>, s: &Settings) -> Result<Outcome> {
        self.apply_fixed(&mut l);
        for &v in &self.free {
            if !l[v].is_finite() {
                return Err(Error::Precondition(format!("initial guess is not positive at vertex {v}")));
            }
        }
        let mut trace = Vec::new();
        let mut eps_final = 0.0;
        for &eps in &s.eps {
            let sigma = self.cell_sigma(&l);
            let mut e_old = self.log_energy(&l, eps, &sigma);
            for _ in 0..s.max_iters {
                self.check_deadline(s, &trace)?;
                let (mat, b) = self.assemble(&l, Some((eps, &sigma)));
                let y = self.linear_solve(mat, b, s)?;
                // u_new = u_old * y; damp towards u_old while any ratio is not positive
                let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
                let mut lam: f64 = if ymin > 0.05 { 1.0 } else { 0.95 / (1.0 - ymin) };
                let mut accepted = None;
                while lam > 1e-8 {
                    let mut trial = l.clone();
                    for (q, &v) in self.free.iter().enumerate() {
                        trial[v] += (1.0 + lam * (y[q] - 1.0)).ln();
                    }
                    let e_new = self.log_energy(&trial, eps, &sigma);
                    if e_new <= e_old + 1e-13 {
                        accepted = Some((trial, e_new));
                        break;
                    }
                    lam *= 0.5;
                }
                let Some((trial, e_new)) = accepted else { break };
                l = trial;
                let rel = -(e_new - e_old).exp_m1();
                e_old = e_new;
                eps_final = eps;
                trace.push(IterRecord { phase: Phase::Irls, eps, log_energy: e_new, residual: self.residual(&l).0, step: lam });
                if rel < s.tol_energy {
                    break;
                }
            }
        }
        let zero_sigma = vec![f64::NEG_INFINITY; self.dom.cells().len()];
        let (mut res, mut merit) = self.residual(&l);
        for _ in 0..s.max_newton {
            if res <= s.tol_grad {
                break;
            }
            self.check_deadline(s, &trace)?;
            let (mat, b) = self.assemble(&l, None);
            let d = match self.linear_solve(mat, b, s) {
                Ok(d) => d,
                Err(e) => {
                    return Err(Error::NonConvergence(format!("Newton step failed ({e}); residual {res:.3e}")));
                }
            };
            let dmax = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let mut lam = (2.0 / dmax.max(1e-300)).min(1.0);
            let mut accepted = false;
            while lam > 1e-10 {
                let mut trial = l.clone();
                for (q, &v) in self.free.iter().enumerate() {
                    trial[v] += lam * d[q];
                }
                let (r2, m2) = self.residual(&trial);
                if m2 < (1.0 - 1e-4 * lam) * merit || (r2 <= s.tol_grad && m2 <= merit) {
                    l = trial;
                    res = r2;
                    merit = m2;
                    accepted = true;
                    break;
                }
                lam *= 0.5;
            }
            trace.push(IterRecord {
                phase: Phase::Newton,
                eps: 0.0,
                log_energy: self.log_energy(&l, 0.0, &zero_sigma),
                residual: res,
                step: if accepted { lam } else { 0.0 },
            });
            if !accepted {
                break;
            }
            eps_final = 0.0;
        }
        if res > s.tol_grad {
            return Err(Error::NonConvergence(format!(
                "residual {res:.3e} above tolerance {:.1e} after {} iterations; trace of residuals: {}",
                s.tol_grad,
                trace.len(),
                trace.iter().map(|r| format!("{:.2e}", r.residual)).collect::<Vec<_>>().join(" ")
            )));
        }
        Ok(Outcome { log_u: l, trace, eps_final })
    }
}
