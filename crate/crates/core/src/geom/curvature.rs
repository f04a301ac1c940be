use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::mesh::SurfaceMesh;
use super::{Domain, TAG_COLLAR};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct CurvatureSample {
    pub vertex: usize,
    pub value: f64,
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Edge lengths averaged over the triangles sharing each edge, and per-edge triangle counts.
fn regge_lengths(mesh: &SurfaceMesh) -> HashMap<(usize, usize), (f64, usize)> {
    let mut map: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for (c, tri) in mesh.triangles.iter().enumerate() {
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let e = map.entry(key(tri[a], tri[b])).or_insert((0.0, 0));
            e.0 += mesh.edge_length(c, a, b);
            e.1 += 1;
        }
    }
    for v in map.values_mut() {
        v.0 /= v.1 as f64;
    }
    map
}

fn angle(opp: f64, a: f64, b: f64) -> f64 {
    ((a * a + b * b - opp * opp) / (2.0 * a * b)).clamp(-1.0, 1.0).acos()
}

/// Gauss curvature at interior vertices: angle defect over the mixed (Voronoi) area.
pub fn gauss_curvature(mesh: &SurfaceMesh) -> Vec<CurvatureSample> {
    let len = regge_lengths(mesh);
    let n = mesh.chart.len();
    let mut boundary = vec![false; n];
    for (&(a, b), &(_, cnt)) in &len {
        if cnt == 1 {
            boundary[a] = true;
            boundary[b] = true;
        }
    }
    let mut angle_sum = vec![0.0; n];
    let mut area = vec![0.0; n];
    for tri in &mesh.triangles {
        let l = [len[&key(tri[1], tri[2])].0, len[&key(tri[2], tri[0])].0, len[&key(tri[0], tri[1])].0];
        let ang = [angle(l[0], l[1], l[2]), angle(l[1], l[2], l[0]), angle(l[2], l[0], l[1])];
        let s = 0.5 * (l[0] + l[1] + l[2]);
        let tri_area = (s * (s - l[0]) * (s - l[1]) * (s - l[2])).max(0.0).sqrt();
        let obtuse = ang.iter().position(|&a| a > std::f64::consts::FRAC_PI_2);
        for i in 0..3 {
            angle_sum[tri[i]] += ang[i];
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            area[tri[i]] += match obtuse {
                None => 0.125 * (l[k] * l[k] / ang[k].tan() + l[j] * l[j] / ang[j].tan()),
                Some(o) if o == i => 0.5 * tri_area,
                Some(_) => 0.25 * tri_area,
            };
        }
    }
    (0..n)
        .filter(|&v| !boundary[v] && area[v] > 0.0)
        .map(|v| CurvatureSample { vertex: v, value: (2.0 * std::f64::consts::PI - angle_sum[v]) / area[v] })
        .collect()
}

/// Mean curvature (geodesic curvature in dimension 2) of the boundary of the tagged region.
pub fn boundary_geodesic_curvature(dom: &Domain, tag: &str) -> Result<Vec<CurvatureSample>> {
    let ids = dom.tag(tag)?;
    if ids.is_empty() {
        return Err(Error::Degenerate(format!("tag `{tag}` is empty")));
    }
    match dom {
        Domain::Radial(g) => {
            let v = *ids.iter().max_by(|a, b| g.nodes[**a].total_cmp(&g.nodes[**b])).unwrap();
            Ok(vec![CurvatureSample { vertex: v, value: g.model.mean_curvature(g.nodes[v]) }])
        }
        Domain::Surface(mesh) => {
            let inside: BTreeSet<usize> = ids.iter().copied().collect();
            let collar: BTreeSet<usize> = dom.tag(TAG_COLLAR).map(|c| c.iter().copied().collect()).unwrap_or_default();
            let len = regge_lengths(mesh);
            let mut count: HashMap<(usize, usize), usize> = HashMap::new();
            let mut angle_sum: HashMap<usize, f64> = HashMap::new();
            for tri in &mesh.triangles {
                if !tri.iter().all(|v| inside.contains(v)) {
                    continue;
                }
                let l = [len[&key(tri[1], tri[2])].0, len[&key(tri[2], tri[0])].0, len[&key(tri[0], tri[1])].0];
                let ang = [angle(l[0], l[1], l[2]), angle(l[1], l[2], l[0]), angle(l[2], l[0], l[1])];
                for i in 0..3 {
                    *angle_sum.entry(tri[i]).or_insert(0.0) += ang[i];
                    *count.entry(key(tri[i], tri[(i + 1) % 3])).or_insert(0) += 1;
                }
            }
            let mut half_len: HashMap<usize, f64> = HashMap::new();
            for (&(a, b), &c) in &count {
                if c == 1 && !(collar.contains(&a) && collar.contains(&b)) {
                    let l = len[&(a, b)].0;
                    *half_len.entry(a).or_insert(0.0) += 0.5 * l;
                    *half_len.entry(b).or_insert(0.0) += 0.5 * l;
                }
            }
            let mut out: Vec<CurvatureSample> = half_len
                .iter()
                .filter(|(v, _)| !collar.contains(v))
                .map(|(&v, &hl)| CurvatureSample { vertex: v, value: (std::f64::consts::PI - angle_sum[&v]) / hl })
                .collect();
            out.sort_by_key(|s| s.vertex);
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{RingSpacing, WarpedSurface};

    fn surface(h: fn(f64) -> f64, t_out: f64) -> SurfaceMesh {
        WarpedSurface {
            h: std::sync::Arc::new(h),
            f: std::sync::Arc::new(|_, _| 1.0),
            n_t: 80,
            n_theta: 128,
            t_in: 0.05,
            t_out,
            spacing: RingSpacing::Geometric,
            pole: true,
            background: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn constant_curvature_surfaces() {
        let hyp = surface(f64::sinh, 3.0);
        let sph = surface(f64::sin, 2.5);
        for (mesh, k) in [(&hyp, -1.0), (&sph, 1.0)] {
            let ks = gauss_curvature(mesh);
            let inner: Vec<_> = ks.iter().filter(|s| (0.3..2.0).contains(&mesh.chart[s.vertex][0])).collect();
            assert!(!inner.is_empty());
            for s in inner {
                assert!((s.value - k).abs() < 0.05, "t={} K={}", mesh.chart[s.vertex][0], s.value);
            }
        }
    }

    #[test]
    fn disk_boundary_curvature() {
        let mut d = Domain::Surface(surface(|t| t, 3.0));
        d.tag_ball("omega", 1.0).unwrap();
        let ks = boundary_geodesic_curvature(&d, "omega").unwrap();
        let a = ks.iter().map(|s| d.distance()[s.vertex]).fold(0.0, f64::max);
        for s in &ks {
            assert!((s.value * a - 1.0).abs() < 0.05, "{}", s.value);
        }
    }
}
