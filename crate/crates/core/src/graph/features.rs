use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, SeededRng};

/// Sparse non-negative `N × d` feature matrix (bag-of-words rows).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures {
    num_nodes: usize,
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NodeFeatures {
    /// Triplets `(node, column, value)` in any order; duplicates are rejected.
    pub fn from_triplets<I>(num_nodes: usize, dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut t: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(n, c, v) in &t {
            if n >= num_nodes || c >= dim {
                return Err(Error::InvalidArgument(format!(
                    "feature entry ({n}, {c}) outside {num_nodes}x{dim}"
                )));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "feature entry ({n}, {c}) has invalid value {v}"
                )));
            }
        }
        t.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = t.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidArgument(format!(
                "duplicate feature entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_ptr = vec![0usize; num_nodes + 1];
        for &(n, _, _) in &t {
            row_ptr[n + 1] += 1;
        }
        for i in 0..num_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            num_nodes,
            dim,
            row_ptr,
            col_idx: t.iter().map(|e| e.1).collect(),
            values: t.iter().map(|e| e.2).collect(),
        })
    }

    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), t)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_nodes, self.dim);
        for i in 0..self.num_nodes {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m.set(i, c, v);
            }
        }
        m
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&c, &v)| (i, c, v))
        })
    }

    /// Rows scaled to unit sum; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.num_nodes {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let sum: f64 = out.values[s..e].iter().sum();
            if sum > 0.0 {
                out.values[s..e].iter_mut().for_each(|v| *v /= sum);
            }
        }
        out
    }

    /// Inverted dropout over the stored entries: each survives with
    /// probability `1 - rate` and is rescaled by `1 / (1 - rate)`.
    pub fn dropout(&self, rate: f64, rng: &mut SeededRng) -> Self {
        let mut out = self.clone();
        if rate == 0.0 {
            return out;
        }
        let keep = 1.0 / (1.0 - rate);
        for v in out.values.iter_mut() {
            *v = if rng.uniform() < rate { 0.0 } else { *v * keep };
        }
        out
    }

    /// `X · W`
    pub fn matmul(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        if w.rows() != self.dim {
            return Err(Error::Shape(format!(
                "features {}x{} times {:?}",
                self.num_nodes,
                self.dim,
                w.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(self.num_nodes, w.cols());
        for i in 0..self.num_nodes {
            let (cols, vals) = self.row(i);
            let dst = out.row_mut(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if v == 0.0 {
                    continue;
                }
                for (d, &x) in dst.iter_mut().zip(w.row(c)) {
                    *d += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `Xᵀ · G`
    pub fn t_matmul(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        if g.rows() != self.num_nodes {
            return Err(Error::Shape(format!(
                "features {}x{} transposed times {:?}",
                self.num_nodes,
                self.dim,
                g.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(self.dim, g.cols());
        for i in 0..self.num_nodes {
            let (cols, vals) = self.row(i);
            let src = g.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if v == 0.0 {
                    continue;
                }
                for (d, &x) in out.row_mut(c).iter_mut().zip(src) {
                    *d += v * x;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_normalization_and_products() {
        let x = NodeFeatures::from_triplets(2, 3, [(0, 0, 1.0), (0, 2, 3.0), (1, 1, 2.0)]).unwrap();
        let xn = x.row_normalized();
        assert_eq!(xn.row(0).1, &[0.25, 0.75]);
        assert_eq!(xn.row(1).1, &[1.0]);
        let w = DenseMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let dense = x.to_dense();
        assert_eq!(x.matmul(&w).unwrap(), dense.matmul(&w).unwrap());
        let g = DenseMatrix::from_fn(2, 2, |i, j| (i + j) as f64 + 0.5);
        assert_eq!(x.t_matmul(&g).unwrap(), dense.t_matmul(&g).unwrap());
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(NodeFeatures::from_triplets(1, 1, [(0, 1, 1.0)]).is_err());
        assert!(NodeFeatures::from_triplets(1, 1, [(0, 0, -1.0)]).is_err());
        assert!(NodeFeatures::from_triplets(1, 2, [(0, 0, 1.0), (0, 0, 1.0)]).is_err());
    }
}
