#![allow(dead_code)]

pub mod oracle;

use bgcn_core::distance::DistanceMatrix;
use bgcn_core::SeededRng;

/// Symmetric zero-diagonal distances with entries uniform in `[0, scale)`.
pub fn random_dense(n: usize, scale: f64, rng: &mut SeededRng) -> DistanceMatrix {
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = scale * rng.uniform();
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    DistanceMatrix::Dense { n, values }
}

/// Squared distances between random points in the unit square.
pub fn random_points(n: usize, rng: &mut SeededRng) -> DistanceMatrix {
    let xy: Vec<(f64, f64)> = (0..n).map(|_| (rng.uniform(), rng.uniform())).collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            values[i * n + j] = (xy[i].0 - xy[j].0).powi(2) + (xy[i].1 - xy[j].1).powi(2);
        }
    }
    DistanceMatrix::Dense { n, values }
}

pub fn dense_values(z: &DistanceMatrix) -> (usize, Vec<f64>) {
    let n = z.num_nodes();
    let mut out = vec![0.0; n * n];
    for (i, j, v) in z.upper_entries() {
        out[i * n + j] = v;
        out[j * n + i] = v;
    }
    (n, out)
}
