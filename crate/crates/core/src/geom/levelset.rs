use super::mesh::SurfaceMesh;
use super::radial::RadialGrid;
use crate::quad::gl8;

/// Moves `c` off any vertex value so that every crossing is transversal.
pub(crate) fn nudge(field: &[f64], c: f64) -> f64 {
    let scale = c.abs().max(1e-300);
    if field.iter().any(|&f| (f - c).abs() <= 1e-14 * scale) {
        c + 1e-12 * scale
    } else {
        c
    }
}

pub(crate) fn radial_level_integral(g: &RadialGrid, f: &[f64], c: f64, w: &[f64], u: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..g.nodes.len() - 1 {
        let (fa, fb) = (f[i], f[i + 1]);
        if (fa - c) * (fb - c) < 0.0 {
            let s = (c - fa) / (fb - fa);
            let r = g.nodes[i] + s * (g.nodes[i + 1] - g.nodes[i]);
            let ur = u[i] + s * (u[i + 1] - u[i]);
            acc += w[i] * ur * g.model.log_v(r).exp();
        }
    }
    acc
}

fn radial_piece(g: &RadialGrid, a: f64, b: f64, ua: f64, ub: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    gl8(a, b)
        .iter()
        .map(|&(x, wt)| {
            let s = (x - a) / (b - a);
            wt * (ua + s * (ub - ua)) * g.model.log_v(x).exp()
        })
        .sum()
}

pub(crate) fn radial_sublevel_integral(g: &RadialGrid, f: &[f64], c: f64, w: &[f64], u: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..g.nodes.len() - 1 {
        let (a, b) = (g.nodes[i], g.nodes[i + 1]);
        let (fa, fb) = (f[i], f[i + 1]);
        let below = (fa < c, fb < c);
        let piece = match below {
            (false, false) => 0.0,
            (true, true) => {
                if u[i] == 1.0 && u[i + 1] == 1.0 {
                    g.complex.cells[i].measure
                } else {
                    radial_piece(g, a, b, u[i], u[i + 1])
                }
            }
            _ => {
                let s = (c - fa) / (fb - fa);
                let r = a + s * (b - a);
                let ur = u[i] + s * (u[i + 1] - u[i]);
                if below.0 {
                    radial_piece(g, a, r, u[i], ur)
                } else {
                    radial_piece(g, r, b, ur, u[i + 1])
                }
            }
        };
        acc += w[i] * piece;
    }
    acc
}

pub(crate) fn mesh_level_integral(m: &SurfaceMesh, f: &[f64], c: f64, w: &[f64], u: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (k, tri) in m.triangles.iter().enumerate() {
        let x = m.tri_chart(k);
        let mut pts = [[0.0; 2]; 2];
        let mut us = [0.0; 2];
        let mut n = 0;
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let (fa, fb) = (f[tri[a]], f[tri[b]]);
            if (fa - c) * (fb - c) < 0.0 && n < 2 {
                let s = (c - fa) / (fb - fa);
                pts[n] = [x[a][0] + s * (x[b][0] - x[a][0]), x[a][1] + s * (x[b][1] - x[a][1])];
                us[n] = u[tri[a]] + s * (u[tri[b]] - u[tri[a]]);
                n += 1;
            }
        }
        if n == 2 {
            let l = m.segment_length(k, pts[0], pts[1]);
            acc += w[k] * l * 0.5 * (us[0] + us[1]);
        }
    }
    acc
}

pub(crate) fn mesh_sublevel_integral(m: &SurfaceMesh, f: &[f64], c: f64, w: &[f64], u: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (k, tri) in m.triangles.iter().enumerate() {
        let area = m.complex.cells[k].measure;
        let fv = [f[tri[0]], f[tri[1]], f[tri[2]]];
        let uv = [u[tri[0]], u[tri[1]], u[tri[2]]];
        let below: Vec<usize> = (0..3).filter(|&i| fv[i] < c).collect();
        let full = area * (uv[0] + uv[1] + uv[2]) / 3.0;
        // integral over the corner cut off at vertex i by the level line
        let corner = |i: usize| {
            let j = (i + 1) % 3;
            let l = (i + 2) % 3;
            let sj = (c - fv[i]) / (fv[j] - fv[i]);
            let sl = (c - fv[i]) / (fv[l] - fv[i]);
            let uj = uv[i] + sj * (uv[j] - uv[i]);
            let ul = uv[i] + sl * (uv[l] - uv[i]);
            area * sj * sl * (uv[i] + uj + ul) / 3.0
        };
        let piece = match below.len() {
            0 => 0.0,
            3 => full,
            1 => corner(below[0]),
            _ => {
                let above = (0..3).find(|i| !below.contains(i)).unwrap();
                full - corner(above)
            }
        };
        acc += w[k] * piece;
    }
    acc
}
