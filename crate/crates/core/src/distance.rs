//! Pairwise node distances `Z = Z₁ + δ·Z₂`.
//!
//! `Z₁` is the squared Euclidean distance between embeddings. `Z₂` is the
//! fraction of disagreeing predicted labels across the two observed
//! neighbourhoods. `δ = max Z₁ / max Z₂` puts both on the same scale. Large
//! graphs evaluate `Z` only on a candidate support (observed edges plus the
//! exact k nearest neighbours in embedding space).

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{neighborhoods, SparseGraph};
use crate::nn::DenseMatrix;

/// Symmetric non-negative distances with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum DistanceMatrix {
    /// Full row-major `N × N` matrix.
    Dense { n: usize, values: Vec<f64> },
    /// Values on a fixed set of pairs `(i, j)`, `i < j`, sorted and unique.
    Support {
        n: usize,
        pairs: Vec<(usize, usize)>,
        values: Vec<f64>,
    },
}

impl DistanceMatrix {
    pub fn num_nodes(&self) -> usize {
        match self {
            Self::Dense { n, .. } | Self::Support { n, .. } => *n,
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Self::Dense { .. })
    }

    pub fn from_dense(m: &DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Shape(format!("distance matrix {:?}", m.shape())));
        }
        let d = Self::Dense {
            n: m.rows(),
            values: m.as_slice().to_vec(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Off-support entries read as `None`.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        match self {
            Self::Dense { n, values } => Some(values[i * n + j]),
            Self::Support { pairs, values, .. } => {
                if i == j {
                    return Some(0.0);
                }
                let key = (i.min(j), i.max(j));
                pairs.binary_search(&key).ok().map(|k| values[k])
            }
        }
    }

    /// Upper-triangular entries `(i, j, z)` with `i < j`.
    pub fn upper_entries(&self) -> Box<dyn Iterator<Item = (usize, usize, f64)> + '_> {
        match self {
            Self::Dense { n, values } => {
                let n = *n;
                Box::new(
                    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, values[i * n + j]))),
                )
            }
            Self::Support { pairs, values, .. } => {
                Box::new(pairs.iter().zip(values).map(|(&(i, j), &v)| (i, j, v)))
            }
        }
    }

    pub fn max(&self) -> f64 {
        let vals = match self {
            Self::Dense { values, .. } | Self::Support { values, .. } => values,
        };
        vals.iter().copied().fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Dense { n, values } => {
                if values.len() != n * n {
                    return Err(Error::Shape(format!("{} values for {n}x{n}", values.len())));
                }
                for i in 0..*n {
                    if values[i * n + i] != 0.0 {
                        return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
                    }
                    for j in i + 1..*n {
                        let (a, b) = (values[i * n + j], values[j * n + i]);
                        if a != b {
                            return Err(Error::InvalidArgument(format!(
                                "asymmetric distance at ({i}, {j})"
                            )));
                        }
                    }
                }
            }
            Self::Support { n, pairs, values } => {
                if pairs.len() != values.len() {
                    return Err(Error::Shape("support pairs and values differ".into()));
                }
                if pairs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidArgument("support not sorted/unique".into()));
                }
                if pairs.iter().any(|&(i, j)| i >= j || j >= *n) {
                    return Err(Error::InvalidArgument("support pair out of range".into()));
                }
            }
        }
        let vals = match self {
            Self::Dense { values, .. } | Self::Support { values, .. } => values,
        };
        if let Some(v) = vals.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NonFinite(format!("distance value {v}")));
        }
        Ok(())
    }

    /// `i<TAB>j<TAB>z` for every stored upper-triangular entry.
    pub fn write_triplets(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for (i, j, v) in self.upper_entries() {
            writeln!(out, "{i}\t{j}\t{v}").unwrap();
        }
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared Euclidean distances between embedding rows.
pub fn z1(emb: &DenseMatrix) -> Result<DistanceMatrix> {
    if !emb.is_finite() {
        return Err(Error::NonFinite("embedding".into()));
    }
    let n = emb.rows();
    let mut values = vec![0.0; n * n];
    if n > 0 {
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                if j != i {
                    *v = sq_dist(emb.row(i), emb.row(j));
                }
            }
        });
    }
    Ok(DistanceMatrix::Dense { n, values })
}

/// Per-node class counts over the self-inclusive neighbourhood.
struct LabelHistograms {
    classes: usize,
    counts: Vec<u64>,
    sizes: Vec<u64>,
}

impl LabelHistograms {
    fn new(neigh: &[Vec<usize>], predicted: &[usize], classes: usize) -> Result<Self> {
        if neigh.len() != predicted.len() {
            return Err(Error::Shape(format!(
                "{} neighbourhoods, {} labels",
                neigh.len(),
                predicted.len()
            )));
        }
        if let Some(&c) = predicted.iter().find(|&&c| c >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {c} ≥ {classes} classes"
            )));
        }
        let mut counts = vec![0u64; neigh.len() * classes];
        let mut sizes = Vec::with_capacity(neigh.len());
        for (i, nb) in neigh.iter().enumerate() {
            for &k in nb {
                counts[i * classes + predicted[k]] += 1;
            }
            sizes.push(nb.len() as u64);
        }
        Ok(Self {
            classes,
            counts,
            sizes,
        })
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.classes..(i + 1) * self.classes]
    }

    /// `Z₂_ij` for `i ≠ j`.
    fn disagreement(&self, i: usize, j: usize) -> f64 {
        let total = self.sizes[i] * self.sizes[j];
        if total == 0 {
            return 0.0;
        }
        let agree: u64 = self
            .row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| a * b)
            .sum();
        (total - agree) as f64 / total as f64
    }
}

/// `Z₂_ij = |{(k, l) ∈ N_i × N_j : ĉ_k ≠ ĉ_l}| / (|N_i| |N_j|)` with the
/// diagonal set to zero.
pub fn z2(neigh: &[Vec<usize>], predicted: &[usize], num_classes: usize) -> Result<DistanceMatrix> {
    let h = LabelHistograms::new(neigh, predicted, num_classes)?;
    let n = neigh.len();
    let mut values = vec![0.0; n * n];
    if n > 0 {
        values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                if j != i {
                    *v = h.disagreement(i, j);
                }
            }
        });
    }
    Ok(DistanceMatrix::Dense { n, values })
}

/// `max Z₁ / max Z₂`, or 0 when `Z₂` vanishes.
pub fn delta(z1: &DistanceMatrix, z2: &DistanceMatrix) -> f64 {
    delta_from_max(z1.max(), z2.max())
}

fn delta_from_max(max_z1: f64, max_z2: f64) -> f64 {
    if max_z2 > 0.0 {
        max_z1 / max_z2
    } else {
        0.0
    }
}

/// Elementwise `Z₁ + δ·Z₂`; both inputs must share shape or support.
pub fn combine(z1: &DistanceMatrix, z2: &DistanceMatrix, delta: f64) -> Result<DistanceMatrix> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta {delta}")));
    }
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + delta * y).collect();
    match (z1, z2) {
        (DistanceMatrix::Dense { n, values: a }, DistanceMatrix::Dense { n: m, values: b })
            if n == m =>
        {
            Ok(DistanceMatrix::Dense {
                n: *n,
                values: add(a, b),
            })
        }
        (
            DistanceMatrix::Support {
                n,
                pairs: p,
                values: a,
            },
            DistanceMatrix::Support {
                n: m,
                pairs: q,
                values: b,
            },
        ) if n == m && p == q => Ok(DistanceMatrix::Support {
            n: *n,
            pairs: p.clone(),
            values: add(a, b),
        }),
        _ => Err(Error::Shape(
            "combine needs matching dense shapes or identical supports".into(),
        )),
    }
}

/// The three matrices and the scale factor that produced `z`.
#[derive(Clone, Debug)]
pub struct DistanceParts {
    pub z1: DistanceMatrix,
    pub z2: DistanceMatrix,
    pub delta: f64,
    pub z: DistanceMatrix,
}

/// Dense `Z` from embeddings and predicted labels over the observed graph.
pub fn build_dense(
    emb: &DenseMatrix,
    observed: &SparseGraph,
    predicted: &[usize],
    num_classes: usize,
) -> Result<DistanceParts> {
    check_rows(emb, observed)?;
    let z1 = z1(emb)?;
    let z2 = z2(&neighborhoods(observed), predicted, num_classes)?;
    let delta = delta(&z1, &z2);
    let z = combine(&z1, &z2, delta)?;
    Ok(DistanceParts { z1, z2, delta, z })
}

fn check_rows(emb: &DenseMatrix, observed: &SparseGraph) -> Result<()> {
    if emb.rows() != observed.num_nodes() {
        return Err(Error::Shape(format!(
            "{} embeddings for {} nodes",
            emb.rows(),
            observed.num_nodes()
        )));
    }
    if !emb.is_finite() {
        return Err(Error::NonFinite("embedding".into()));
    }
    Ok(())
}

/// Exact k nearest neighbours of every node under squared Euclidean
/// distance, ties broken by index. Returned lists are sorted by distance.
pub fn knn(emb: &DenseMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = emb.rows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(emb.row(i), emb.row(j)), j))
                .collect();
            let k = k.min(cand.len());
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.partial_cmp(b).unwrap();
            if k < cand.len() && k > 0 {
                cand.select_nth_unstable_by(k - 1, cmp);
            }
            cand.truncate(k);
            cand.sort_by(cmp);
            // collect from a slice so the n-sized buffer is not reused in place
            cand.iter().map(|&(_, j)| j).collect()
        })
        .collect()
}

/// Support-restricted `Z` over observed edges ∪ k-NN pairs in embedding space.
///
/// `δ` uses the maxima of `Z₁` and `Z₂` over all pairs, computed in a
/// row-blocked sweep, so the restricted values coincide with the dense ones.
pub fn restrict_support(
    emb: &DenseMatrix,
    observed: &SparseGraph,
    predicted: &[usize],
    num_classes: usize,
    k: usize,
) -> Result<DistanceParts> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    check_rows(emb, observed)?;
    let n = emb.rows();
    let h = LabelHistograms::new(&neighborhoods(observed), predicted, num_classes)?;

    let (max_z1, max_z2) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut m = (0.0f64, 0.0f64);
            for j in i + 1..n {
                m.0 = m.0.max(sq_dist(emb.row(i), emb.row(j)));
                m.1 = m.1.max(h.disagreement(i, j));
            }
            m
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let delta = delta_from_max(max_z1, max_z2);

    let mut pairs: Vec<(usize, usize)> = observed.upper_edges().map(|(i, j, _)| (i, j)).collect();
    for (i, nn) in knn(emb, k).into_iter().enumerate() {
        pairs.extend(nn.into_iter().map(|j| (i.min(j), i.max(j))));
    }
    pairs.sort_unstable();
    pairs.dedup();

    let v1: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| sq_dist(emb.row(i), emb.row(j)))
        .collect();
    let v2: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| h.disagreement(i, j))
        .collect();
    let support = |values| DistanceMatrix::Support {
        n,
        pairs: pairs.clone(),
        values,
    };
    let (z1, z2) = (support(v1), support(v2));
    let z = combine(&z1, &z2, delta)?;
    Ok(DistanceParts { z1, z2, delta, z })
}
