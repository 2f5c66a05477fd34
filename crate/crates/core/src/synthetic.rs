//! Seeded planted-partition datasets for tests and demos.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Bundle, LabelInfo, NodeFeatures, SparseGraph};
use crate::nn::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub name: String,
    pub num_nodes: usize,
    pub num_classes: usize,
    /// Split evenly into one topic block per class (remainder is shared noise).
    pub num_features: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub words_per_node: usize,
    /// Probability that a word is drawn from the node's own topic block.
    pub feature_signal: f64,
    pub train_per_class: usize,
    pub num_val: usize,
    pub num_test: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl SyntheticConfig {
    /// The bundle shipped under `tests/assets/toy`.
    pub fn toy() -> Self {
        Self {
            name: "toy".into(),
            num_nodes: 180,
            num_classes: 3,
            num_features: 60,
            p_in: 0.06,
            p_out: 0.01,
            words_per_node: 6,
            feature_signal: 0.5,
            train_per_class: 20,
            num_val: 40,
            num_test: 80,
            seed: 7,
        }
    }
}

/// Class of node `i` is `i mod C`; nodes of the same class link with
/// probability `p_in`, others with `p_out`. Features are binary bags of
/// words. Training nodes are the first `train_per_class` of each class in
/// index order, then validation and test take the next unused nodes.
pub fn planted_partition(cfg: &SyntheticConfig) -> Result<Bundle> {
    let (n, c) = (cfg.num_nodes, cfg.num_classes);
    if c == 0 || cfg.num_features < c || cfg.words_per_node == 0 {
        return Err(Error::InvalidArgument(format!("synthetic config {cfg:?}")));
    }
    if c * cfg.train_per_class + cfg.num_val + cfg.num_test > n || cfg.train_per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "splits do not fit in {n} nodes"
        )));
    }
    for p in [cfg.p_in, cfg.p_out, cfg.feature_signal] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p}")));
        }
    }
    let root = SeededRng::new(cfg.seed);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();

    let mut rng = root.fork(1);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.uniform() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, edges)?;

    let mut rng = root.fork(2);
    let block = cfg.num_features / c;
    let mut triplets = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        let mut words = std::collections::BTreeSet::new();
        for _ in 0..cfg.words_per_node {
            let w = if rng.uniform() < cfg.feature_signal {
                y * block + rng.index(block)
            } else {
                rng.index(cfg.num_features)
            };
            words.insert(w);
        }
        triplets.extend(words.into_iter().map(|w| (i, w, 1.0)));
    }
    let features = NodeFeatures::from_triplets(n, cfg.num_features, triplets)?;

    let mut train = Vec::new();
    for class in 0..c {
        train.extend(
            (0..n)
                .filter(|i| labels[*i] == class)
                .take(cfg.train_per_class),
        );
    }
    train.sort_unstable();
    let mut rest = (0..n).filter(|i| train.binary_search(i).is_err());
    let val: Vec<usize> = rest.by_ref().take(cfg.num_val).collect();
    let test: Vec<usize> = rest.take(cfg.num_test).collect();
    Ok(Bundle {
        name: cfg.name.clone(),
        graph,
        features,
        labels: LabelInfo::new(labels, c, train, val, test)?,
    })
}

/// Eight nodes in two 4-cliques joined by one edge; features are the
/// one-hot class. Nodes 0 and 4 are labelled, the rest are test nodes.
pub fn two_cluster_toy() -> Bundle {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for i in base..base + 4 {
            for j in i + 1..base + 4 {
                edges.push((i, j, 1.0));
            }
        }
    }
    edges.push((3, 4, 1.0));
    let labels: Vec<usize> = (0..8).map(|i| i / 4).collect();
    let graph = SparseGraph::from_edges(8, edges).expect("valid toy graph");
    let features =
        NodeFeatures::from_triplets(8, 2, labels.iter().enumerate().map(|(i, &y)| (i, y, 1.0)))
            .expect("valid toy features");
    let info = LabelInfo::new(labels, 2, vec![0, 4], vec![], vec![1, 2, 3, 5, 6, 7])
        .expect("valid toy labels");
    Bundle {
        name: "two-cluster".into(),
        graph,
        features,
        labels: info,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_shape() {
        let b = planted_partition(&SyntheticConfig::toy()).unwrap();
        assert_eq!(b.graph.num_nodes(), 180);
        assert_eq!(b.labels.train_counts(), [20, 20, 20]);
        assert_eq!(b.labels.val_idx.len(), 40);
        assert_eq!(b.labels.test_idx.len(), 80);
        assert!(b.graph.num_edges() > 0);
        for i in 0..180 {
            assert!(!b.features.row(i).0.is_empty());
        }
    }

    #[test]
    fn seeded_generation_is_stable() {
        let a = planted_partition(&SyntheticConfig::toy()).unwrap();
        let b = planted_partition(&SyntheticConfig::toy()).unwrap();
        assert_eq!(a, b);
        let c = planted_partition(&SyntheticConfig {
            seed: 8,
            ..SyntheticConfig::toy()
        })
        .unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn rejects_oversized_splits() {
        let cfg = SyntheticConfig {
            num_test: 1000,
            ..SyntheticConfig::toy()
        };
        assert!(planted_partition(&cfg).is_err());
    }

    #[test]
    fn two_cluster_is_valid() {
        let b = two_cluster_toy();
        b.graph.validate().unwrap();
        assert_eq!(b.graph.num_edges(), 13);
    }
}
