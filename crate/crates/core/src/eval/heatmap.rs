//! Class-sorted adjacency images (binary PGM) and block statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Weight totals split by whether an edge joins two nodes of the same class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub within_weight: f64,
    pub between_weight: f64,
    /// Unordered node pairs with equal / different labels.
    pub within_pairs: usize,
    pub between_pairs: usize,
    pub within_mean: f64,
    pub between_mean: f64,
    /// `within_weight / (within_weight + between_weight)`; 0 for an empty graph.
    pub within_fraction: f64,
}

pub fn block_stats(g: &SparseGraph, labels: &[usize]) -> Result<BlockStats> {
    let n = g.num_nodes();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {n} nodes",
            labels.len()
        )));
    }
    let (mut within, mut between) = (0.0, 0.0);
    for (i, j, w) in g.upper_edges() {
        if labels[i] == labels[j] {
            within += w;
        } else {
            between += w;
        }
    }
    let mut sizes = std::collections::BTreeMap::<usize, usize>::new();
    for &c in labels {
        *sizes.entry(c).or_default() += 1;
    }
    let within_pairs: usize = sizes.values().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let between_pairs = n * n.saturating_sub(1) / 2 - within_pairs;
    let mean = |w: f64, p: usize| if p == 0 { 0.0 } else { w / p as f64 };
    let total = within + between;
    Ok(BlockStats {
        within_weight: within,
        between_weight: between,
        within_pairs,
        between_pairs,
        within_mean: mean(within, within_pairs),
        between_mean: mean(between, between_pairs),
        within_fraction: if total > 0.0 { within / total } else { 0.0 },
    })
}

/// Nodes sorted by label, ties by index.
pub fn class_ordering(labels: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i], i));
    order
}

#[derive(Clone, Debug)]
pub struct Heatmap {
    /// Image is `size × size`.
    pub size: usize,
    /// Nodes per pixel along each axis.
    pub block: usize,
    pub pixels: Vec<u8>,
    pub ordering: Vec<usize>,
    pub stats: BlockStats,
}

impl Heatmap {
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.size, self.size).into_bytes();
        bytes.extend_from_slice(&self.pixels);
        std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path.as_ref(), e))
    }

    /// One node id per line, in image order.
    pub fn write_ordering(&self, path: impl AsRef<Path>) -> Result<()> {
        let text: String = self.ordering.iter().map(|i| format!("{i}\n")).collect();
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Renders the class-sorted adjacency at most `max_size` pixels wide.
///
/// Each pixel is the mean weight of its node block; non-zero means map
/// log-linearly onto 1..=255 between the smallest and largest block mean,
/// empty blocks are black.
pub fn adjacency_heatmap(g: &SparseGraph, labels: &[usize], max_size: usize) -> Result<Heatmap> {
    let n = g.num_nodes();
    let stats = block_stats(g, labels)?;
    let ordering = class_ordering(labels);
    let block = n.div_ceil(max_size.max(1)).max(1);
    let size = n.div_ceil(block);
    let mut pos = vec![0usize; n];
    for (p, &i) in ordering.iter().enumerate() {
        pos[i] = p;
    }
    let mut cells = vec![0.0f64; size * size];
    for (i, j, w) in g.upper_edges() {
        let (a, b) = (pos[i] / block, pos[j] / block);
        cells[a * size + b] += w;
        cells[b * size + a] += w;
    }
    let area = (block * block) as f64;
    let positive = cells.iter().filter(|v| **v > 0.0).map(|v| (v / area).ln());
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let pixels = cells
        .iter()
        .map(|&v| {
            if v <= 0.0 {
                0
            } else if hi <= lo {
                255
            } else {
                let t = ((v / area).ln() - lo) / (hi - lo);
                (1.0 + 254.0 * t.clamp(0.0, 1.0)).round() as u8
            }
        })
        .collect();
    Ok(Heatmap {
        size,
        block,
        pixels,
        ordering,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_is_black() {
        let g = SparseGraph::empty(6);
        let h = adjacency_heatmap(&g, &[0, 1, 0, 1, 0, 1], 100).unwrap();
        assert_eq!(h.size, 6);
        assert!(h.pixels.iter().all(|&p| p == 0));
        assert_eq!(h.stats.within_fraction, 0.0);
    }

    #[test]
    fn two_blocks_show_on_diagonal() {
        let labels = [0, 1, 0, 1, 0, 1];
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                let w = if labels[i] == labels[j] { 1.0 } else { 0.01 };
                edges.push((i, j, w));
            }
        }
        let g = SparseGraph::from_edges(6, edges).unwrap();
        let h = adjacency_heatmap(&g, &labels, 100).unwrap();
        assert_eq!(h.ordering, [0, 2, 4, 1, 3, 5]);
        assert!(h.stats.within_mean > h.stats.between_mean);
        assert_eq!((h.stats.within_pairs, h.stats.between_pairs), (6, 9));
        // top-left block bright, off-diagonal block dim
        assert_eq!(h.pixels[1], 255);
        assert_eq!(h.pixels[3], 1);
        assert_eq!(h.pixels[0], 0);
    }

    #[test]
    fn downsampling_and_pgm_header() {
        let edges: Vec<_> = (0..9).map(|i| (i, i + 1, 1.0)).collect();
        let g = SparseGraph::from_edges(10, edges).unwrap();
        let h = adjacency_heatmap(&g, &[0; 10], 4).unwrap();
        assert_eq!((h.block, h.size), (3, 4));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        h.write_pgm(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n4 4\n255\n"));
        assert_eq!(bytes.len(), b"P5\n4 4\n255\n".len() + 16);
    }
}
