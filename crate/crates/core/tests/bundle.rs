use std::path::PathBuf;

use bgcn_core::graph::{normalize_adjacency, subset_train_labels, SparseOperator};
use bgcn_core::{load_bundle, SparseGraph};
use proptest::prelude::*;

fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/assets/toy")
}

#[test]
fn toy_bundle_loads() {
    let b = load_bundle(toy_dir()).unwrap();
    assert_eq!(b.graph.num_nodes(), 180);
    assert_eq!(b.graph.num_edges(), 413);
    assert_eq!(b.labels.train_counts(), vec![20, 20, 20]);
    b.graph.validate().unwrap();
    b.labels.validate().unwrap();
}

#[test]
fn label_subsets_are_nested() {
    let b = load_bundle(toy_dir()).unwrap();
    let full = subset_train_labels(&b.labels, 20).unwrap();
    assert_eq!(full, b.labels);
    let ten = subset_train_labels(&b.labels, 10).unwrap();
    let five = subset_train_labels(&b.labels, 5).unwrap();
    assert_eq!(ten.train_counts(), vec![10, 10, 10]);
    assert_eq!(five.train_counts(), vec![5, 5, 5]);
    assert!(five.train_idx.iter().all(|i| ten.train_idx.contains(i)));
    assert!(ten.train_idx.iter().all(|i| full.train_idx.contains(i)));
    assert_eq!(five.test_idx, b.labels.test_idx);
    assert_eq!(five.val_idx, b.labels.val_idx);
    assert!(subset_train_labels(&b.labels, 21).is_err());
}

#[test]
fn toy_normalization_is_symmetric() {
    let b = load_bundle(toy_dir()).unwrap();
    let a = normalize_adjacency(&b.graph);
    for i in 0..a.num_nodes() {
        assert!(a.row_sum(i) > 0.0);
        let (cols, vals) = a.row_entries(i);
        for (&j, &v) in cols.iter().zip(vals) {
            assert_eq!(v, a.get(j, i));
        }
    }
}

fn edge_list() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (2usize..20).prop_flat_map(|n| {
        let e = (0..n, 0..n, 0.1f64..3.0).prop_filter("no loops", |(u, v, _)| u != v);
        (Just(n), prop::collection::vec(e, 0..40))
    })
}

fn dedup(edges: Vec<(usize, usize, f64)>) -> Vec<(usize, usize, f64)> {
    let mut seen = std::collections::HashSet::new();
    edges
        .into_iter()
        .filter(|&(u, v, _)| seen.insert((u.min(v), u.max(v))))
        .collect()
}

proptest! {
    #[test]
    fn symmetrization_is_idempotent((n, edges) in edge_list()) {
        let g = SparseGraph::from_edges(n, dedup(edges)).unwrap();
        let again = SparseGraph::from_edges(n, g.upper_edges()).unwrap();
        prop_assert_eq!(&g, &again);
        for i in 0..n {
            for &j in g.neighbors(i) {
                prop_assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
    }

    #[test]
    fn normalized_adjacency_invariants((n, edges) in edge_list()) {
        let g = SparseGraph::from_edges(n, dedup(edges)).unwrap();
        let a = normalize_adjacency(&g);
        let mut col_sums = vec![0.0; n];
        for i in 0..n {
            prop_assert!(a.row_sum(i) > 0.0);
            let (cols, vals) = a.row_entries(i);
            for (&j, &v) in cols.iter().zip(vals) {
                prop_assert_eq!(v, a.get(j, i));
                col_sums[j] += v;
            }
        }
        for i in 0..n {
            prop_assert!((a.row_sum(i) - col_sums[i]).abs() <= 1e-12);
        }
    }
}
