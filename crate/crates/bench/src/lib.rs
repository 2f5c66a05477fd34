//! Fixtures shared by the benchmarks in `benches/`.

use bgcn_core::graph::Bundle;
use bgcn_core::synthetic::{planted_partition, SyntheticConfig};
use bgcn_core::{DenseMatrix, SeededRng};

/// Planted-partition bundle with `n` nodes and mean degree near 5.
pub fn planted(n: usize) -> Bundle {
    let p_in = 12.0 / n as f64;
    planted_partition(&SyntheticConfig {
        name: format!("planted-{n}"),
        num_nodes: n,
        num_features: 300,
        words_per_node: 20,
        p_in,
        p_out: p_in / 8.0,
        num_val: n / 10,
        num_test: n / 5,
        ..SyntheticConfig::toy()
    })
    .expect("valid synthetic config")
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = SeededRng::new(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}
