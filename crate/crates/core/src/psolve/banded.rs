//! Banded LU for the structurally symmetric sparse systems of the solver.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Cuthill-McKee ordering of a graph, breadth first from `start` (all of it in the first level).
pub fn cuthill_mckee(adj: &[Vec<usize>], start: &[usize]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut seeds: Vec<usize> = start.to_vec();
    loop {
        for &s in &seeds {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !seen[w]).collect();
            nb.sort_by_key(|&w| adj[w].len());
            for w in nb {
                seen[w] = true;
                queue.push_back(w);
            }
        }
        if order.len() == n {
            break;
        }
        // disconnected remainder: restart from its minimum-degree vertex
        let next = (0..n).filter(|&v| !seen[v]).min_by_key(|&v| adj[v].len()).unwrap();
        seeds = vec![next];
    }
    order
}

/// Square matrix stored by diagonals within a fixed half bandwidth.
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, data: vec![0.0; n * (2 * bw + 1)] }
    }

    pub fn bandwidth_of(adj: &[Vec<usize>], pos: &[usize]) -> usize {
        let mut bw = 0;
        for (v, nb) in adj.iter().enumerate() {
            for &w in nb {
                bw = bw.max(pos[v].abs_diff(pos[w]));
            }
        }
        bw
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i.abs_diff(j) <= self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// In-place LU without pivoting followed by the solve; `b` is overwritten with the solution.
    pub fn solve(&mut self, b: &mut [f64]) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for i in 0..n {
            let piv = self.data[i * w + bw];
            if !(piv.abs() > 1e-300) || !piv.is_finite() {
                return Err(Error::NonConvergence(format!("zero pivot in banded LU at row {i}")));
            }
            let iend = (i + bw + 1).min(n);
            for k in i + 1..iend {
                let lk = self.data[k * w + (i + bw - k)] / piv;
                if lk == 0.0 {
                    continue;
                }
                self.data[k * w + (i + bw - k)] = lk;
                let (head, tail) = self.data.split_at_mut(k * w);
                let row_i = &head[i * w..i * w + w];
                let row_k = &mut tail[..w];
                // row_k[j + bw - k] -= lk * row_i[j + bw - i] for j in i+1..iend
                let len = iend - i - 1;
                let src = &row_i[bw + 1..bw + 1 + len];
                let k0 = i + 1 + bw - k;
                for (d, s) in row_k[k0..k0 + len].iter_mut().zip(src) {
                    *d -= lk * s;
                }
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for j in lo..i {
                s -= self.data[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = b[i];
            for j in i + 1..hi {
                s -= self.data[i * w + (j + bw - i)] * b[j];
            }
            b[i] = s / self.data[i * w + bw];
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonConvergence("non-finite linear solve".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_poisson() {
        let n = 50;
        let mut a = BandMatrix::new(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        // exact solution x_i = i (i+1 - n - 1) / 2 ... check residual instead
        let rhs = vec![1.0; n];
        let mut x = rhs.clone();
        a.solve(&mut x).unwrap();
        for i in 0..n {
            let ax = 2.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 };
            assert!((ax - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn nonsymmetric_band() {
        let n = 30;
        let bw = 3;
        let mut a = BandMatrix::new(n, bw);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                let v = if i == j { 10.0 } else { ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6 };
                a.add(i, j, v);
                dense[i][j] = v;
            }
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dense[i][j] * xs[j]).sum()).collect();
        a.solve(&mut b).unwrap();
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn ordering_is_a_permutation() {
        // ring of 10 plus an isolated pair
        let mut adj = vec![Vec::new(); 12];
        for i in 0..10 {
            adj[i].push((i + 1) % 10);
            adj[(i + 1) % 10].push(i);
        }
        adj[10].push(11);
        adj[11].push(10);
        let mut o = cuthill_mckee(&adj, &[0]);
        let mut pos = vec![0; 12];
        for (k, &v) in o.iter().enumerate() {
            pos[v] = k;
        }
        assert!(BandMatrix::bandwidth_of(&adj, &pos) <= 2);
        o.sort();
        assert_eq!(o, (0..12).collect::<Vec<_>>());
    }
}
