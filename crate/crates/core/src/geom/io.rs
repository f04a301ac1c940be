use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::mesh::SurfaceMesh;
use crate::error::{Error, Result};

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| perr(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| perr(line, format!("invalid {what}")))
}

/// Writes a mesh in the OFF-like text format: chart coordinates per vertex, one metric per face.
pub fn write_mesh(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    let mut s = String::new();
    writeln!(s, "OFF").unwrap();
    writeln!(s, "{} {} 0", mesh.chart.len(), mesh.triangles.len()).unwrap();
    for c in &mesh.chart {
        writeln!(s, "{:.16e} {:.16e}", c[0], c[1]).unwrap();
    }
    for (t, g) in mesh.triangles.iter().zip(&mesh.metrics) {
        writeln!(s, "3 {} {} {} {:.16e} {:.16e} {:.16e}", t[0], t[1], t[2], g[0], g[1], g[2]).unwrap();
    }
    if let Some(p) = mesh.period {
        writeln!(s, "period {p:.16e}").unwrap();
    }
    writeln!(s, "collar_radius {:.16e}", mesh.complex.collar_radius).unwrap();
    writeln!(s, "collar_volume {:.16e}", mesh.complex.collar_volume).unwrap();
    for (name, ids) in &mesh.complex.tags {
        write!(s, "tag {name} {}", ids.len()).unwrap();
        for i in ids {
            write!(s, " {i}").unwrap();
        }
        writeln!(s).unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<SurfaceMesh> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty());
    let (ln, head) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    if head != "OFF" {
        return Err(perr(ln, "expected OFF header"));
    }
    let (ln, counts) = lines.next().ok_or_else(|| perr(ln + 1, "missing counts"))?;
    let mut it = counts.split_whitespace();
    let nv: usize = num(it.next(), ln, "vertex count")?;
    let nf: usize = num(it.next(), ln, "face count")?;
    let mut chart = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of vertices"))?;
        let mut it = l.split_whitespace();
        chart.push([num(it.next(), ln, "t")?, num(it.next(), ln, "θ")?]);
    }
    let mut triangles = Vec::with_capacity(nf);
    let mut metrics = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of faces"))?;
        let mut it = l.split_whitespace();
        let k: usize = num(it.next(), ln, "face size")?;
        if k != 3 {
            return Err(perr(ln, "only triangles are supported"));
        }
        let tri = [num(it.next(), ln, "index")?, num(it.next(), ln, "index")?, num(it.next(), ln, "index")?];
        if tri.iter().any(|&v: &usize| v >= nv) {
            return Err(perr(ln, "vertex index out of range"));
        }
        triangles.push(tri);
        metrics.push([num(it.next(), ln, "g11")?, num(it.next(), ln, "g12")?, num(it.next(), ln, "g22")?]);
    }
    let mut period = None;
    let mut collar_radius = 0.0;
    let mut collar_volume = 0.0;
    let mut tags = BTreeMap::new();
    for (ln, l) in lines {
        let mut it = l.split_whitespace();
        match it.next() {
            Some("period") => period = Some(num(it.next(), ln, "period")?),
            Some("collar_radius") => collar_radius = num(it.next(), ln, "collar radius")?,
            Some("collar_volume") => collar_volume = num(it.next(), ln, "collar volume")?,
            Some("tag") => {
                let name = it.next().ok_or_else(|| perr(ln, "missing tag name"))?.to_string();
                let count: usize = num(it.next(), ln, "tag size")?;
                let ids: Vec<usize> = it.map(|x| x.parse().map_err(|_| perr(ln, "invalid tag index"))).collect::<Result<_>>()?;
                if ids.len() != count || ids.iter().any(|&i| i >= nv) {
                    return Err(perr(ln, "tag indices do not match the count or are out of range"));
                }
                tags.insert(name, ids);
            }
            _ => return Err(perr(ln, format!("unrecognised line `{l}`"))),
        }
    }
    SurfaceMesh::from_parts(chart, triangles, metrics, period, tags, collar_radius, collar_volume, None)
}

pub fn write_field_csv(values: &[f64], path: &Path) -> Result<()> {
    let mut s = String::from("vertex_id,value\n");
    for (i, v) in values.iter().enumerate() {
        writeln!(s, "{i},{v:.14e}").unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1) {
        if l.trim().is_empty() {
            continue;
        }
        let mut it = l.split(',');
        let id: usize = num(it.next().map(str::trim), i + 1, "vertex id")?;
        if id != out.len() {
            return Err(perr(i + 1, "vertex ids must be consecutive from 0"));
        }
        out.push(num(it.next().map(str::trim), i + 1, "value")?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{RingSpacing, WarpedSurface};

    #[test]
    fn mesh_roundtrip() {
        let mesh = WarpedSurface {
            h: std::sync::Arc::new(f64::sinh),
            f: std::sync::Arc::new(|t: f64, th: f64| 1.0 + 0.05 * th.sin() * (t * (2.0 - t)).max(0.0)),
            n_t: 12,
            n_theta: 16,
            t_in: 0.1,
            t_out: 2.0,
            spacing: RingSpacing::Geometric,
            pole: true,
            background: None,
        }
        .build()
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.off");
        write_mesh(&mesh, &p).unwrap();
        let back = read_mesh(&p).unwrap();
        assert_eq!(back.triangles, mesh.triangles);
        assert_eq!(back.complex.tags, mesh.complex.tags);
        // the imported mesh only knows per-face metrics, so distances agree to discretization error
        for (a, b) in back.complex.r.iter().zip(&mesh.complex.r) {
            assert!((a - b).abs() < 0.05 * mesh.complex.h_max);
        }
        assert!((back.total_area() - mesh.total_area()).abs() < 1e-12);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.off");
        std::fs::write(&p, "OFF\n3 1 0\n0 0\n1 0\n0 x\n").unwrap();
        match read_mesh(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn field_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let v = vec![1.0, -2.5e-7, 3.25];
        write_field_csv(&v, &p).unwrap();
        assert_eq!(read_field_csv(&p).unwrap(), v);
    }
}
