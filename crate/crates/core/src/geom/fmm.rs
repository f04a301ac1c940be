use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::mesh::SurfaceMesh;
use super::Domain;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Source {
    pub vertex: usize,
    pub value: f64,
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Arrival time at `c` from known values at `a` and `b` of one triangle, unfolded into the
/// plane with a virtual point source. Falls back to edge paths when the source does not
/// see `c` through the edge `ab`.
fn triangle_update(ta: f64, tb: f64, lab: f64, lac: f64, lbc: f64) -> f64 {
    let edge = (ta + lac).min(tb + lbc);
    let cx = (lab * lab + lac * lac - lbc * lbc) / (2.0 * lab);
    let cy2 = lac * lac - cx * cx;
    if cy2 <= 0.0 {
        return edge;
    }
    let cy = cy2.sqrt();
    let sx = (lab * lab + ta * ta - tb * tb) / (2.0 * lab);
    let sy2 = ta * ta - sx * sx;
    if sy2 < 0.0 {
        return edge;
    }
    let sy = -sy2.sqrt();
    let xi = sx + (cx - sx) * (-sy) / (cy - sy);
    if !(0.0..=lab).contains(&xi) {
        return edge;
    }
    let d = ((cx - sx).powi(2) + (cy - sy).powi(2)).sqrt();
    d.min(edge)
}

pub(crate) fn fmm(mesh: &SurfaceMesh, sources: &[Source]) -> Vec<f64> {
    let n = mesh.chart.len();
    let vc = &mesh.complex.vertex_cells;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for s in sources {
        if s.value < dist[s.vertex] {
            dist[s.vertex] = s.value;
            heap.push(Item(s.value, s.vertex));
        }
    }
    while let Some(Item(d, v)) = heap.pop() {
        if done[v] || d > dist[v] {
            continue;
        }
        done[v] = true;
        for &c in &vc[v] {
            let tri = mesh.triangles[c];
            let lv = tri.iter().position(|&x| x == v).unwrap();
            for k in 1..3 {
                let lx = (lv + k) % 3;
                let ly = (lv + 3 - k) % 3;
                let x = tri[lx];
                if done[x] {
                    continue;
                }
                let y = tri[ly];
                let mut cand = dist[v] + mesh.edge_length(c, lv, lx);
                if done[y] {
                    let lab = mesh.edge_length(c, lv, ly);
                    let lac = mesh.edge_length(c, lv, lx);
                    let lbc = mesh.edge_length(c, ly, lx);
                    cand = cand.min(triangle_update(dist[v], dist[y], lab, lac, lbc));
                }
                if cand < dist[x] {
                    dist[x] = cand;
                    heap.push(Item(cand, x));
                }
            }
        }
    }
    dist
}

/// Discrete geodesic distance from one vertex. On radial grids this is the distance along the ray.
pub fn geodesic_distance(dom: &Domain, source: usize) -> Result<Vec<f64>> {
    if source >= dom.n_vertices() {
        return Err(Error::Domain(format!("source vertex {source} out of range")));
    }
    Ok(match dom {
        Domain::Radial(g) => g.nodes.iter().map(|t| (t - g.nodes[source]).abs()).collect(),
        Domain::Surface(s) => fmm(s, &[Source { vertex: source, value: 0.0 }]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_point_source_is_exact() {
        // source at the origin, a = (1,0), b = (0,1), c = (1,1)
        let t = triangle_update(1.0, 1.0, 2f64.sqrt(), 1.0, 1.0);
        assert!((t - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn fallback_when_not_visible() {
        let t = triangle_update(0.0, 5.0, 1.0, 1.0, 2f64.sqrt());
        assert!((t - 1.0).abs() < 1e-14);
    }
}
