use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Cell, Complex, TAG_COLLAR, TAG_OUTER};
use crate::error::{Error, Result};
use crate::model::ModelManifold;

/// One-dimensional grid `ε = t_0 < … < t_n = T` on a model; cells carry the exact shell volumes.
#[derive(Clone, Debug)]
pub struct RadialGrid {
    pub model: Arc<ModelManifold>,
    pub nodes: Vec<f64>,
    pub(crate) complex: Complex,
}

impl RadialGrid {
    /// Nodes equispaced in `log(t + shift)`; small `shift` grades towards the pole,
    /// large `shift` approaches a uniform grid.
    pub fn new(model: Arc<ModelManifold>, eps_pole: f64, t_out: f64, n_cells: usize, shift: f64) -> Result<Self> {
        if !(eps_pole > 0.0) || !(t_out > eps_pole) {
            return Err(Error::Domain(format!("need 0 < ε < T, got ε = {eps_pole}, T = {t_out}")));
        }
        if n_cells < 2 {
            return Err(Error::Domain("radial grid needs at least two cells".into()));
        }
        if !(shift > 0.0) {
            return Err(Error::Domain("grading shift must be > 0".into()));
        }
        if let Some(r) = model.r_inf() {
            if t_out >= r {
                return Err(Error::Domain(format!("T = {t_out} reaches r_inf = {r}")));
            }
        }
        let a = (eps_pole + shift).ln();
        let b = (t_out + shift).ln();
        let mut nodes: Vec<f64> = (0..=n_cells)
            .map(|i| (a + (b - a) * i as f64 / n_cells as f64).exp() - shift)
            .collect();
        nodes[0] = eps_pole;
        nodes[n_cells] = t_out;
        Self::from_nodes(model, nodes)
    }

    pub fn from_nodes(model: Arc<ModelManifold>, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 || nodes.windows(2).any(|w| !(w[1] > w[0])) || !(nodes[0] > 0.0) {
            return Err(Error::Domain("radial nodes must be positive and strictly increasing".into()));
        }
        let n = nodes.len();
        let mut cells = Vec::with_capacity(n - 1);
        let mut h_max: f64 = 0.0;
        for i in 0..n - 1 {
            let d = nodes[i + 1] - nodes[i];
            h_max = h_max.max(d);
            cells.push(Cell {
                verts: [i, i + 1, 0],
                nv: 2,
                grads: [[-1.0 / d, 0.0], [1.0 / d, 0.0], [0.0, 0.0]],
                measure: model.shell_volume(nodes[i], nodes[i + 1]),
            });
        }
        let mut tags = BTreeMap::new();
        tags.insert(TAG_COLLAR.to_string(), vec![0]);
        tags.insert(TAG_OUTER.to_string(), vec![n - 1]);
        let mut complex = Complex {
            cells,
            n_vertices: n,
            r: nodes.clone(),
            t: nodes.clone(),
            tags,
            collar_radius: nodes[0],
            collar_volume: model.ball_volume(nodes[0])?,
            h_max,
            m: model.dim(),
            vertex_cells: Vec::new(),
        };
        complex.finish();
        Ok(RadialGrid { model, nodes, complex })
    }

    /// Same grid with every cell split in two.
    pub fn refined(&self) -> Result<Self> {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len());
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(*self.nodes.last().unwrap());
        Self::from_nodes(self.model.clone(), nodes)
    }

    pub fn complex(&self) -> &Complex {
        &self.complex
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CurvatureProfile;

    #[test]
    fn cell_measures_sum_to_shell() {
        let mm = Arc::new(ModelManifold::new(3, CurvatureProfile::constant(1.0), 20.0).unwrap());
        let g = RadialGrid::new(mm.clone(), 0.01, 5.0, 500, 0.1).unwrap();
        let total: f64 = g.complex.cells.iter().map(|c| c.measure).sum();
        let exact = mm.ball_volume(5.0).unwrap() - mm.ball_volume(0.01).unwrap();
        assert!((total / exact - 1.0).abs() < 1e-10);
        assert_eq!(g.nodes.len(), 501);
        assert!((g.complex.collar_volume - mm.ball_volume(0.01).unwrap()).abs() < 1e-15);
        let r = g.refined().unwrap();
        assert_eq!(r.nodes.len(), 1001);
        assert!(r.complex.h_max < 0.51 * g.complex.h_max);
    }
}
