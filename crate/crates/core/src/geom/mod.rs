//! Discretizations: radial grids on model manifolds and triangulated warped surfaces.
//!
//! Both are reduced to the same P1 cell complex: every cell carries the gradients of its
//! hat functions in an orthonormal frame and its Riemannian measure.

mod curvature;
mod fmm;
mod io;
mod levelset;
mod mesh;
mod radial;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use curvature::{boundary_geodesic_curvature, gauss_curvature, CurvatureSample};
pub use fmm::geodesic_distance;
pub use io::{read_field_csv, read_mesh, write_field_csv, write_mesh};
pub use mesh::{RingSpacing, SurfaceMesh, WarpFn, WarpedSurface};
pub use radial::RadialGrid;

use crate::error::{Error, Result};
use crate::model::ModelManifold;

pub const TAG_COLLAR: &str = "pole-collar";
pub const TAG_OUTER: &str = "outer";

/// A P1 cell: a segment (radial grids) or a triangle.
#[derive(Clone, Debug)]
pub struct Cell {
    pub verts: [usize; 3],
    pub nv: usize,
    /// Gradient of each hat function in an orthonormal frame of the cell.
    pub grads: [[f64; 2]; 3],
    pub measure: f64,
}

impl Cell {
    pub fn vertices(&self) -> &[usize] {
        &self.verts[..self.nv]
    }

    /// Gradient of the P1 interpolant of `f`.
    pub fn gradient(&self, f: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..self.nv {
            let v = f[self.verts[k]];
            g[0] += v * self.grads[k][0];
            g[1] += v * self.grads[k][1];
        }
        g
    }
}

/// Vertex data and cells shared by every discretization.
#[derive(Clone, Debug, Default)]
pub struct Complex {
    pub cells: Vec<Cell>,
    pub n_vertices: usize,
    /// Distance from the pole (collar radius plus geodesic distance from the collar).
    pub r: Vec<f64>,
    /// Radial chart coordinate.
    pub t: Vec<f64>,
    pub tags: BTreeMap<String, Vec<usize>>,
    pub collar_radius: f64,
    pub collar_volume: f64,
    pub h_max: f64,
    pub m: usize,
    pub vertex_cells: Vec<Vec<usize>>,
}

impl Complex {
    pub(crate) fn finish(&mut self) {
        let mut vc = vec![Vec::new(); self.n_vertices];
        for (c, cell) in self.cells.iter().enumerate() {
            for &v in cell.vertices() {
                vc[v].push(c);
            }
        }
        self.vertex_cells = vc;
    }

    /// Sorted neighbour lists through shared cells.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.n_vertices];
        for cell in &self.cells {
            for &a in cell.vertices() {
                for &b in cell.vertices() {
                    if a != b {
                        nb[a].push(b);
                    }
                }
            }
        }
        for l in nb.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        nb
    }
}

/// Perimeter and enclosed volume of a sublevel set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSetMeasure {
    pub level: f64,
    pub perimeter: f64,
    pub volume: f64,
}

/// A discretized manifold on which kernels are solved.
#[derive(Clone, Debug)]
pub enum Domain {
    Radial(RadialGrid),
    Surface(SurfaceMesh),
}

impl Domain {
    pub fn complex(&self) -> &Complex {
        match self {
            Domain::Radial(g) => &g.complex,
            Domain::Surface(s) => &s.complex,
        }
    }

    fn complex_mut(&mut self) -> &mut Complex {
        match self {
            Domain::Radial(g) => &mut g.complex,
            Domain::Surface(s) => &mut s.complex,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.complex().n_vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.complex().cells
    }

    pub fn dim(&self) -> usize {
        self.complex().m
    }

    pub fn distance(&self) -> &[f64] {
        &self.complex().r
    }

    pub fn chart_t(&self) -> &[f64] {
        &self.complex().t
    }

    pub fn mesh_size(&self) -> f64 {
        self.complex().h_max
    }

    pub fn collar_radius(&self) -> f64 {
        self.complex().collar_radius
    }

    pub fn collar_volume(&self) -> f64 {
        self.complex().collar_volume
    }

    pub fn tag(&self, name: &str) -> Result<&[usize]> {
        self.complex()
            .tags
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Domain(format!("unknown vertex tag `{name}`")))
    }

    pub fn add_tag(&mut self, name: &str, mut ids: Vec<usize>) -> Result<()> {
        let n = self.n_vertices();
        if ids.iter().any(|&i| i >= n) {
            return Err(Error::Domain(format!("tag `{name}` references a vertex out of range")));
        }
        ids.sort_unstable();
        ids.dedup();
        self.complex_mut().tags.insert(name.to_string(), ids);
        Ok(())
    }

    /// Tags the vertices with distance `<= radius` from the pole.
    pub fn tag_ball(&mut self, name: &str, radius: f64) -> Result<()> {
        let ids: Vec<usize> = self.distance().iter().enumerate().filter(|(_, &r)| r <= radius).map(|(i, _)| i).collect();
        self.add_tag(name, ids)
    }

    /// Model of the geometry outside the meshed region, used for exterior completion.
    pub fn background(&self) -> Option<&Arc<ModelManifold>> {
        match self {
            Domain::Radial(g) => Some(&g.model),
            Domain::Surface(s) => s.background.as_ref(),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Domain::Radial(g) => format!("radial-m{}-n{}", g.complex.m, g.complex.n_vertices),
            Domain::Surface(s) => format!("surface-v{}-f{}", s.complex.n_vertices, s.triangles.len()),
        }
    }

    /// Gradient norm of the P1 interpolant of `f` on every cell.
    pub fn gradient_norms(&self, f: &[f64]) -> Vec<f64> {
        self.cells()
            .iter()
            .map(|c| {
                let g = c.gradient(f);
                (g[0] * g[0] + g[1] * g[1]).sqrt()
            })
            .collect()
    }

    /// Lumped vertex volumes (one share of each adjacent cell per vertex).
    pub fn vertex_volumes(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_vertices()];
        for c in self.cells() {
            for &v in c.vertices() {
                w[v] += c.measure / c.nv as f64;
            }
        }
        w
    }

    /// Perimeter of `{field = c}` and volume of `{field < c}`, the latter including the
    /// unmeshed collar when the collar lies in the sublevel set.
    pub fn level_set(&self, field: &[f64], c: f64) -> Result<LevelSetMeasure> {
        self.check_field(field)?;
        let c = levelset::nudge(field, c);
        let ones = vec![1.0; self.n_vertices()];
        let unit = vec![1.0; self.cells().len()];
        let perimeter = self.level_integral(field, c, &unit, &ones)?;
        let mut volume = self.sublevel_integral(field, c, &unit, &ones)?;
        if let Ok(collar) = self.tag(TAG_COLLAR) {
            let inside = collar.iter().filter(|&&v| field[v] < c).count();
            if !collar.is_empty() {
                volume += self.collar_volume() * inside as f64 / collar.len() as f64;
            }
        }
        Ok(LevelSetMeasure { level: c, perimeter, volume })
    }

    /// `Σ_cells w_cell ∫_{field = c} u`.
    pub fn level_integral(&self, field: &[f64], c: f64, w: &[f64], u: &[f64]) -> Result<f64> {
        self.check_field(field)?;
        self.check_field(u)?;
        let c = levelset::nudge(field, c);
        Ok(match self {
            Domain::Radial(g) => levelset::radial_level_integral(g, field, c, w, u),
            Domain::Surface(s) => levelset::mesh_level_integral(s, field, c, w, u),
        })
    }

    /// `Σ_cells w_cell ∫_{field < c} u` over the meshed region.
    pub fn sublevel_integral(&self, field: &[f64], c: f64, w: &[f64], u: &[f64]) -> Result<f64> {
        self.check_field(field)?;
        self.check_field(u)?;
        let c = levelset::nudge(field, c);
        Ok(match self {
            Domain::Radial(g) => levelset::radial_sublevel_integral(g, field, c, w, u),
            Domain::Surface(s) => levelset::mesh_sublevel_integral(s, field, c, w, u),
        })
    }

    /// Number of edge hops from the vertices of `tag`; `usize::MAX` where unreachable.
    pub fn hop_distance(&self, tag: &str) -> Result<Vec<usize>> {
        let seeds = self.tag(tag)?;
        let nb = self.complex().neighbours();
        let mut d = vec![usize::MAX; self.n_vertices()];
        let mut queue = std::collections::VecDeque::new();
        for &s in seeds {
            d[s] = 0;
            queue.push_back(s);
        }
        while let Some(v) = queue.pop_front() {
            for &w in &nb[v] {
                if d[w] == usize::MAX {
                    d[w] = d[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(d)
    }

    /// Cells all of whose vertices are at least `layers` hops away from each `(tag, layers)` band.
    /// Missing tags are ignored.
    pub fn cells_outside_bands(&self, bands: &[(&str, usize)]) -> Vec<bool> {
        let mut keep = vec![true; self.cells().len()];
        for &(tag, layers) in bands {
            let Ok(d) = self.hop_distance(tag) else { continue };
            for (k, c) in self.cells().iter().enumerate() {
                if c.vertices().iter().any(|&v| d[v] < layers) {
                    keep[k] = false;
                }
            }
        }
        keep
    }

    pub(crate) fn check_field(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_vertices() {
            return Err(Error::Domain(format!(
                "field has {} values but the domain has {} vertices",
                f.len(),
                self.n_vertices()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CurvatureProfile;

    #[test]
    fn tags_and_balls() {
        let mm = Arc::new(ModelManifold::new(3, CurvatureProfile::constant(0.0), 10.0).unwrap());
        let mut d = Domain::Radial(RadialGrid::new(mm, 0.01, 5.0, 200, 0.1).unwrap());
        d.tag_ball("omega", 1.0).unwrap();
        assert!(d.tag("omega").unwrap().iter().all(|&v| d.distance()[v] <= 1.0));
        assert!(d.tag("nope").is_err());
        assert!(d.add_tag("bad", vec![10_000]).is_err());
        assert!(d.level_set(&[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn hop_layers() {
        let mm = Arc::new(ModelManifold::new(3, CurvatureProfile::constant(0.0), 10.0).unwrap());
        let d = Domain::Radial(RadialGrid::new(mm, 0.01, 5.0, 50, 0.1).unwrap());
        let h = d.hop_distance(TAG_COLLAR).unwrap();
        assert_eq!(&h[..4], &[0, 1, 2, 3]);
        let keep = d.cells_outside_bands(&[(TAG_COLLAR, 3), (TAG_OUTER, 2)]);
        assert_eq!(keep.iter().filter(|k| !**k).count(), 3 + 2);
        assert!(keep[3] && !keep[2]);
    }
}
