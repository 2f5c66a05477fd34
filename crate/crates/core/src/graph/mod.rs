//! Graph, feature, and label types plus the bundle loader.
//!
//! [`SparseGraph`] stores an undirected weighted graph in CSR form with both
//! directions present. The observed citation graph and the learned MAP graph
//! share this type; [`NormalizedAdjacency`] is the self-loop renormalized
//! propagation operator `D̃^{-1/2}(A + I)D̃^{-1/2}` built from either.

pub mod bundle;
mod features;
mod labels;

pub use bundle::{load_bundle, write_bundle, Bundle, Manifest, Splits};
pub use features::NodeFeatures;
pub use labels::{subset_train_labels, LabelInfo};

use crate::error::{Error, Result};

/// Square sparse operator in CSR layout, consumed by [`crate::nn::spmm`].
pub trait SparseOperator {
    fn dim(&self) -> usize;
    fn row_entries(&self, i: usize) -> (&[usize], &[f64]);
}

/// Symmetric non-negative weighted adjacency, zero diagonal, CSR with sorted columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseGraph {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            row_ptr: vec![0; num_nodes + 1],
            col_idx: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Builds a graph from undirected edges given in either orientation.
    ///
    /// Each pair may appear several times as long as every occurrence carries
    /// the same weight. Zero-weight edges are dropped; self-loops, negative or
    /// non-finite weights and out-of-range endpoints are rejected.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        for (u, v, w) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidArgument(format!("self-loop on node {u}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            pairs.push((u.min(v), u.max(v), w));
        }
        pairs.sort_by_key(|p| (p.0, p.1));
        let mut unique: Vec<(usize, usize, f64)> = Vec::with_capacity(pairs.len());
        for p in pairs {
            match unique.last() {
                Some(last) if (last.0, last.1) == (p.0, p.1) => {
                    if last.2 != p.2 {
                        return Err(Error::InvalidArgument(format!(
                            "edge ({}, {}) listed with conflicting weights {} and {}",
                            p.0, p.1, last.2, p.2
                        )));
                    }
                }
                _ => unique.push(p),
            }
        }
        unique.retain(|p| p.2 > 0.0);
        Ok(Self::from_sorted_upper(num_nodes, &unique))
    }

    /// `upper` must hold strictly upper-triangular pairs, sorted and unique.
    pub(crate) fn from_sorted_upper(num_nodes: usize, upper: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; num_nodes + 1];
        for &(u, v, _) in upper {
            counts[u + 1] += 1;
            counts[v + 1] += 1;
        }
        for i in 0..num_nodes {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts;
        let nnz = row_ptr[num_nodes];
        let mut fill = row_ptr.clone();
        let mut col_idx = vec![0usize; nnz];
        let mut weights = vec![0.0; nnz];
        // Lower entries of row v (u < v) arrive in increasing u; the upper
        // entries of row u arrive in increasing v, after every lower entry.
        for &(u, v, w) in upper {
            col_idx[fill[v]] = u;
            weights[fill[v]] = w;
            fill[v] += 1;
        }
        for &(u, v, w) in upper {
            col_idx[fill[u]] = v;
            weights[fill[u]] = w;
            fill[u] += 1;
        }
        let mut g = Self {
            num_nodes,
            row_ptr,
            col_idx,
            weights,
        };
        g.sort_rows();
        g
    }

    fn sort_rows(&mut self) {
        for i in 0..self.num_nodes {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let cols = &self.col_idx[s..e];
            if cols.windows(2).all(|w| w[0] < w[1]) {
                continue;
            }
            let mut entries: Vec<(usize, f64)> = cols
                .iter()
                .copied()
                .zip(self.weights[s..e].iter().copied())
                .collect();
            entries.sort_by_key(|e| e.0);
            for (k, (c, w)) in entries.into_iter().enumerate() {
                self.col_idx[s + k] = c;
                self.weights[s + k] = w;
            }
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored (directed) entries; twice the undirected edge count.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn num_edges(&self) -> usize {
        self.nnz() / 2
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn row_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Unweighted degree.
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn weighted_degree(&self, i: usize) -> f64 {
        self.row_weights(i).iter().sum()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.num_nodes == 0 {
            return 0.0;
        }
        self.nnz() as f64 / self.num_nodes as f64
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.neighbors(i).binary_search(&j) {
            Ok(k) => self.row_weights(i)[k],
            Err(_) => 0.0,
        }
    }

    /// Upper-triangular edges `(i, j, w)` with `i < j`, in row-major order.
    pub fn upper_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .zip(self.row_weights(i))
                .filter(move |(&j, _)| j > i)
                .map(move |(&j, &w)| (i, j, w))
        })
    }

    /// Checks every structural invariant of the type.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.row_ptr.len() != self.num_nodes + 1 || self.row_ptr[0] != 0 {
            return bad("row_ptr has wrong length or origin".into());
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("row_ptr not monotone".into());
        }
        if *self.row_ptr.last().unwrap() != self.col_idx.len()
            || self.col_idx.len() != self.weights.len()
        {
            return bad("entry arrays inconsistent with row_ptr".into());
        }
        for i in 0..self.num_nodes {
            let cols = self.neighbors(i);
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {i} unsorted or duplicated"));
            }
            for (&j, &w) in cols.iter().zip(self.row_weights(i)) {
                if j >= self.num_nodes {
                    return bad(format!("column {j} out of range"));
                }
                if j == i {
                    return bad(format!("diagonal entry on node {i}"));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return bad(format!("invalid weight {w} at ({i}, {j})"));
                }
                if self.weight(j, i) != w {
                    return bad(format!("asymmetric entry ({i}, {j})"));
                }
            }
        }
        Ok(())
    }
}

impl SparseOperator for SparseGraph {
    fn dim(&self) -> usize {
        self.num_nodes
    }

    fn row_entries(&self, i: usize) -> (&[usize], &[f64]) {
        (self.neighbors(i), self.row_weights(i))
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` with `D̃ = diag((A + I)·1)`, diagonal stored explicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row_entries(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row_entries(i).1.iter().sum()
    }
}

impl SparseOperator for NormalizedAdjacency {
    fn dim(&self) -> usize {
        self.num_nodes
    }

    fn row_entries(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }
}

pub fn normalize_adjacency(g: &SparseGraph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let deg: Vec<f64> = (0..n).map(|i| 1.0 + g.weighted_degree(i)).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(g.nnz() + n);
    let mut values = Vec::with_capacity(g.nnz() + n);
    row_ptr.push(0);
    for i in 0..n {
        let mut diag_done = false;
        for (&j, &w) in g.neighbors(i).iter().zip(g.row_weights(i)) {
            if !diag_done && j > i {
                col_idx.push(i);
                values.push(1.0 / deg[i]);
                diag_done = true;
            }
            col_idx.push(j);
            // Multiplication commutes exactly, so (i, j) and (j, i) match bitwise.
            values.push(w / (deg[i] * deg[j]).sqrt());
        }
        if !diag_done {
            col_idx.push(i);
            values.push(1.0 / deg[i]);
        }
        row_ptr.push(col_idx.len());
    }
    NormalizedAdjacency {
        num_nodes: n,
        row_ptr,
        col_idx,
        values,
    }
}

/// Self-inclusive neighbourhoods `N_i = {j : (i, j) ∈ E} ∪ {i}`, sorted.
pub fn neighborhoods(g: &SparseGraph) -> Vec<Vec<usize>> {
    (0..g.num_nodes())
        .map(|i| {
            let nb = g.neighbors(i);
            let mut set = Vec::with_capacity(nb.len() + 1);
            let pos = nb.partition_point(|&j| j < i);
            set.extend_from_slice(&nb[..pos]);
            set.push(i);
            set.extend_from_slice(&nb[pos..]);
            set
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_is_symmetrized() {
        let g = SparseGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(1, 0), 1.0);
        g.validate().unwrap();
    }

    #[test]
    fn duplicates_and_conflicts() {
        let g = SparseGraph::from_edges(3, [(0, 1, 2.0), (1, 0, 2.0), (2, 1, 1.0)]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(SparseGraph::from_edges(2, [(0, 1, 1.0), (1, 0, 2.0)]).is_err());
        assert!(SparseGraph::from_edges(2, [(1, 1, 1.0)]).is_err());
        assert!(SparseGraph::from_edges(2, [(0, 2, 1.0)]).is_err());
        assert!(SparseGraph::from_edges(2, [(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let a = normalize_adjacency(&SparseGraph::empty(1));
        assert_eq!(a.get(0, 0), 1.0);
    }

    #[test]
    fn unit_edge_normalizes_to_halves() {
        let g = SparseGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let a = normalize_adjacency(&g);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.get(i, j), 0.5);
            }
        }
    }

    #[test]
    fn weighted_edge_normalization() {
        let g = SparseGraph::from_edges(2, [(0, 1, 3.0)]).unwrap();
        let a = normalize_adjacency(&g);
        assert!((a.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((a.get(0, 1) - 0.75).abs() < 1e-15);
        assert!((a.get(1, 0) - 0.75).abs() < 1e-15);
        assert!((a.get(1, 1) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn neighborhoods_include_self() {
        let g = SparseGraph::from_edges(4, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let nb = neighborhoods(&g);
        assert_eq!(nb[1], vec![0, 1, 2]);
        assert_eq!(nb[3], vec![3]);
        assert_eq!(nb[0], vec![0, 1]);
    }
}
