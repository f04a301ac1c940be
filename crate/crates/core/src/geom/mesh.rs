use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fmm::{fmm, Source};
use super::{Cell, Complex, TAG_COLLAR, TAG_OUTER};
use crate::error::{Error, Result};
use crate::model::ModelManifold;
use crate::quad::integrate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RingSpacing {
    Uniform,
    /// Rings equispaced in `log t`; with `n_θ ≈ 2π (n_t - 1) / log(T/ε)` the cells are nearly isotropic.
    #[default]
    Geometric,
}

/// Warping `w(t, θ)` of a diagonal metric `dt² + w² dθ²`.
#[derive(Clone)]
pub struct WarpFn(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl std::fmt::Debug for WarpFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("WarpFn")
    }
}

/// Triangulated 2-dimensional chart `(t, θ)` with one constant metric per triangle.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub chart: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// `(g11, g12, g22)` per triangle in chart coordinates.
    pub metrics: Vec<[f64; 3]>,
    /// Period of the second chart coordinate, if it is an angle.
    pub period: Option<f64>,
    pub background: Option<Arc<ModelManifold>>,
    /// Exact warping, when the mesh was generated from one.
    pub warp: Option<WarpFn>,
    /// Edge lengths per triangle for edges (0,1), (1,2), (2,0), shared by neighbours.
    pub(crate) lengths: Vec<[f64; 3]>,
    pub(crate) complex: Complex,
}

/// Builder for `dt² + (h(t) f(t, θ))² dθ²` on `[t_in, t_out] × S¹`.
#[derive(Clone)]
pub struct WarpedSurface {
    pub h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub n_t: usize,
    pub n_theta: usize,
    pub t_in: f64,
    pub t_out: f64,
    pub spacing: RingSpacing,
    /// The inner ring is a collar around a pole at `t = 0`.
    pub pole: bool,
    pub background: Option<Arc<ModelManifold>>,
}

impl WarpedSurface {
    /// Rotationally symmetric surface over a 2-dimensional model, perturbed by `f`.
    pub fn over_model(
        model: Arc<ModelManifold>,
        f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        n_t: usize,
        n_theta: usize,
        eps_pole: f64,
        t_out: f64,
    ) -> Result<Self> {
        if model.dim() != 2 {
            return Err(Error::Domain("warped surfaces need a 2-dimensional model".into()));
        }
        let mm = model.clone();
        Ok(WarpedSurface {
            h: Arc::new(move |t| mm.h(t)),
            f,
            n_t,
            n_theta,
            t_in: eps_pole,
            t_out,
            spacing: RingSpacing::Geometric,
            pole: true,
            background: Some(model),
        })
    }

    pub fn build(&self) -> Result<SurfaceMesh> {
        let (nt, nth) = (self.n_t, self.n_theta);
        if nt < 2 || nth < 3 {
            return Err(Error::Domain("warped surface needs n_t >= 2 and n_θ >= 3".into()));
        }
        if !(self.t_out > self.t_in) || (self.pole && !(self.t_in > 0.0)) {
            return Err(Error::Domain(format!("invalid chart range [{}, {}]", self.t_in, self.t_out)));
        }
        let rings: Vec<f64> = (0..nt)
            .map(|i| {
                let s = i as f64 / (nt - 1) as f64;
                match self.spacing {
                    RingSpacing::Geometric if self.t_in > 0.0 => self.t_in * (self.t_out / self.t_in).powf(s),
                    _ => self.t_in + (self.t_out - self.t_in) * s,
                }
            })
            .collect();
        let tau = 2.0 * std::f64::consts::PI;
        let dth = tau / nth as f64;
        let mut chart = Vec::with_capacity(nt * nth);
        for &t in &rings {
            for j in 0..nth {
                chart.push([t, j as f64 * dth]);
            }
        }
        let id = |i: usize, j: usize| i * nth + (j % nth);
        let mut triangles = Vec::with_capacity(2 * (nt - 1) * nth);
        for i in 0..nt - 1 {
            for j in 0..nth {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let (h, f) = (self.h.clone(), self.f.clone());
        let warp = WarpFn(Arc::new(move |t, th| h(t) * f(t, th)));
        let mut metrics = Vec::with_capacity(triangles.len());
        let mut lengths = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let x = unwrap(&chart, tri, Some(tau));
            let tb = (x[0][0] + x[1][0] + x[2][0]) / 3.0;
            let thb = (x[0][1] + x[1][1] + x[2][1]) / 3.0;
            let w = (warp.0)(tb, thb);
            metrics.push([1.0, 0.0, w * w]);
            let wf = &*warp.0;
            lengths.push([
                geodesic_length(wf, x[0], x[1]),
                geodesic_length(wf, x[1], x[2]),
                geodesic_length(wf, x[2], x[0]),
            ]);
        }
        let mut tags = BTreeMap::new();
        tags.insert(if self.pole { TAG_COLLAR } else { "inner" }.to_string(), (0..nth).collect());
        tags.insert(TAG_OUTER.to_string(), ((nt - 1) * nth..nt * nth).collect());
        let (collar_radius, collar_volume) = if self.pole {
            let vol = match &self.background {
                Some(bg) => bg.ball_volume(self.t_in)?,
                None => {
                    let ring = |s: f64| (0..64).map(|k| (self.f)(s, k as f64 * tau / 64.0)).sum::<f64>() * tau / 64.0;
                    integrate(|s| (self.h)(s) * ring(s), 0.0, self.t_in)
                }
            };
            (self.t_in, vol)
        } else {
            (0.0, 0.0)
        };
        SurfaceMesh::assemble(
            chart,
            triangles,
            metrics,
            Some(tau),
            tags,
            (collar_radius, collar_volume),
            self.background.clone(),
            Some(warp),
            Some(lengths),
        )
    }
}

/// Second-order geodesic distance in `dt² + w² dθ²` between nearby chart points:
/// energy of the parabola through both points with the geodesic curvature at the midpoint.
pub(crate) fn geodesic_length(w: &dyn Fn(f64, f64) -> f64, x0: [f64; 2], x1: [f64; 2]) -> f64 {
    let m = [0.5 * (x0[0] + x1[0]), 0.5 * (x0[1] + x1[1])];
    let d = [x1[0] - x0[0], x1[1] - x0[1]];
    let dt = 1e-4 * m[0].abs().max(1e-2);
    let dth = 1e-4;
    let w0 = w(m[0], m[1]);
    let wt = (w(m[0] + dt, m[1]) - w(m[0] - dt, m[1])) / (2.0 * dt);
    let wth = (w(m[0], m[1] + dth) - w(m[0], m[1] - dth)) / (2.0 * dth);
    let wtt = (w(m[0] + dt, m[1]) - 2.0 * w0 + w(m[0] - dt, m[1])) / (dt * dt);
    let wthth = (w(m[0], m[1] + dth) - 2.0 * w0 + w(m[0], m[1] - dth)) / (dth * dth);
    let wtth = (w(m[0] + dt, m[1] + dth) - w(m[0] + dt, m[1] - dth) - w(m[0] - dt, m[1] + dth)
        + w(m[0] - dt, m[1] - dth))
        / (4.0 * dt * dth);
    // g = diag(1, w²): only g22 varies
    let g22 = w0 * w0;
    let dg = [2.0 * w0 * wt, 2.0 * w0 * wth];
    let ddg = [
        [2.0 * (wt * wt + w0 * wtt), 2.0 * (wt * wth + w0 * wtth)],
        [2.0 * (wt * wth + w0 * wtth), 2.0 * (wth * wth + w0 * wthth)],
    ];
    // Christoffel symbols of diag(1, w²)
    let gam_t = -w0 * wt * d[1] * d[1];
    let gam_th = 2.0 * (wt / w0) * d[0] * d[1] + (wth / w0) * d[1] * d[1];
    let c = [-0.5 * gam_t, -0.5 * gam_th];
    let gdd = d[0] * d[0] + g22 * d[1] * d[1];
    let gcc = c[0] * c[0] + g22 * c[1] * c[1];
    let dd_dd = d[1] * d[1] * (ddg[0][0] * d[0] * d[0] + 2.0 * ddg[0][1] * d[0] * d[1] + ddg[1][1] * d[1] * d[1]);
    let dgc = (dg[0] * c[0] + dg[1] * c[1]) * d[1] * d[1];
    let dgd_dc = (dg[0] * d[0] + dg[1] * d[1]) * d[1] * c[1];
    let e = gdd + gcc / 3.0 + dd_dd / 24.0 - dgc / 6.0 + dgd_dc / 3.0;
    e.max(0.0).sqrt()
}

/// Chart coordinates of a triangle with the periodic coordinate unwrapped around the first vertex.
pub(crate) fn unwrap(chart: &[[f64; 2]], tri: &[usize; 3], period: Option<f64>) -> [[f64; 2]; 3] {
    let mut x = [chart[tri[0]], chart[tri[1]], chart[tri[2]]];
    if let Some(p) = period {
        for k in 1..3 {
            x[k][1] += p * ((x[0][1] - x[k][1]) / p).round();
        }
    }
    x
}

fn averaged_lengths(chart: &[[f64; 2]], tris: &[[usize; 3]], metrics: &[[f64; 3]], period: Option<f64>) -> Vec<[f64; 3]> {
    use std::collections::HashMap;
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut acc: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for (tri, g) in tris.iter().zip(metrics) {
        let x = unwrap(chart, tri, period);
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let e = acc.entry(key(tri[a], tri[b])).or_insert((0.0, 0));
            e.0 += metric_length(g, [x[b][0] - x[a][0], x[b][1] - x[a][1]]);
            e.1 += 1;
        }
    }
    tris.iter()
        .map(|t| {
            let l = |a: usize, b: usize| {
                let (s, n) = acc[&key(t[a], t[b])];
                s / n as f64
            };
            [l(0, 1), l(1, 2), l(2, 0)]
        })
        .collect()
}

pub(crate) fn metric_length(g: &[f64; 3], d: [f64; 2]) -> f64 {
    (g[0] * d[0] * d[0] + 2.0 * g[1] * d[0] * d[1] + g[2] * d[1] * d[1]).max(0.0).sqrt()
}

impl SurfaceMesh {
    /// Mesh from raw parts; edge lengths come from the per-triangle metrics averaged across each edge.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        chart: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        metrics: Vec<[f64; 3]>,
        period: Option<f64>,
        tags: BTreeMap<String, Vec<usize>>,
        collar_radius: f64,
        collar_volume: f64,
        background: Option<Arc<ModelManifold>>,
    ) -> Result<Self> {
        Self::assemble(chart, triangles, metrics, period, tags, (collar_radius, collar_volume), background, None, None)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        chart: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        metrics: Vec<[f64; 3]>,
        period: Option<f64>,
        tags: BTreeMap<String, Vec<usize>>,
        (collar_radius, collar_volume): (f64, f64),
        background: Option<Arc<ModelManifold>>,
        warp: Option<WarpFn>,
        lengths: Option<Vec<[f64; 3]>>,
    ) -> Result<Self> {
        if triangles.len() != metrics.len() {
            return Err(Error::Domain("one metric per triangle required".into()));
        }
        let n = chart.len();
        let mut cells = Vec::with_capacity(triangles.len());
        for (c, (tri, g)) in triangles.iter().zip(&metrics).enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::Domain(format!("triangle {c} references a missing vertex")));
            }
            let det = g[0] * g[2] - g[1] * g[1];
            if !(g[0] > 0.0) || !(det > 0.0) || !det.is_finite() {
                return Err(Error::InvalidMetric { cell: c, reason: format!("not positive definite: {g:?}") });
            }
            let x = unwrap(&chart, tri, period);
            let e1 = [x[1][0] - x[0][0], x[1][1] - x[0][1]];
            let e2 = [x[2][0] - x[0][0], x[2][1] - x[0][1]];
            let jd = e1[0] * e2[1] - e1[1] * e2[0];
            if jd.abs() < 1e-300 {
                return Err(Error::Domain(format!("triangle {c} is degenerate in the chart")));
            }
            // rows of J^{-1}: chart differentials of the barycentric coordinates 1 and 2
            let d1 = [e2[1] / jd, -e2[0] / jd];
            let d2 = [-e1[1] / jd, e1[0] / jd];
            let d0 = [-d1[0] - d2[0], -d1[1] - d2[1]];
            let l11 = g[0].sqrt();
            let l21 = g[1] / l11;
            let l22 = (g[2] - l21 * l21).sqrt();
            let frame = |d: [f64; 2]| {
                let y1 = d[0] / l11;
                [y1, (d[1] - l21 * y1) / l22]
            };
            cells.push(Cell {
                verts: *tri,
                nv: 3,
                grads: [frame(d0), frame(d1), frame(d2)],
                measure: 0.5 * jd.abs() * det.sqrt(),
            });
        }
        let lengths = match lengths {
            Some(l) => l,
            None => averaged_lengths(&chart, &triangles, &metrics, period),
        };
        let h_max = lengths.iter().flat_map(|l| l.iter()).cloned().fold(0.0, f64::max);
        let t: Vec<f64> = chart.iter().map(|c| c[0]).collect();
        let mut complex = Complex {
            cells,
            n_vertices: n,
            r: vec![0.0; n],
            t,
            tags,
            collar_radius,
            collar_volume,
            h_max,
            m: 2,
            vertex_cells: Vec::new(),
        };
        complex.finish();
        let mut mesh = SurfaceMesh { chart, triangles, metrics, period, background, warp, lengths, complex };
        let sources: Vec<Source> = if let Some(c) = mesh.complex.tags.get(TAG_COLLAR) {
            c.iter().map(|&v| Source { vertex: v, value: collar_radius }).collect()
        } else if let Some(c) = mesh.complex.tags.get("inner") {
            c.iter().map(|&v| Source { vertex: v, value: 0.0 }).collect()
        } else {
            vec![Source { vertex: 0, value: 0.0 }]
        };
        mesh.complex.r = fmm(&mesh, &sources);
        Ok(mesh)
    }

    pub fn complex(&self) -> &Complex {
        &self.complex
    }

    pub(crate) fn tri_chart(&self, c: usize) -> [[f64; 2]; 3] {
        unwrap(&self.chart, &self.triangles[c], self.period)
    }

    /// Length of the edge between local vertices `a` and `b` of triangle `c`.
    pub(crate) fn edge_length(&self, c: usize, a: usize, b: usize) -> f64 {
        let e = match (a.min(b), a.max(b)) {
            (0, 1) => 0,
            (1, 2) => 1,
            _ => 2,
        };
        self.lengths[c][e]
    }

    /// Length of a chart segment inside triangle `c`: metric at the segment midpoint when the
    /// warping is known, else the triangle metric.
    pub(crate) fn segment_length(&self, c: usize, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = [b[0] - a[0], b[1] - a[1]];
        match &self.warp {
            Some(w) => {
                let ww = (w.0)(0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]));
                (d[0] * d[0] + ww * ww * d[1] * d[1]).sqrt()
            }
            None => metric_length(&self.metrics[c], d),
        }
    }

    pub fn total_area(&self) -> f64 {
        self.complex.cells.iter().map(|c| c.measure).sum()
    }
}
