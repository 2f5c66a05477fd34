//! Brute-force reference for the graph-learning problem.
//!
//! Projected gradient descent on the upper triangle with a backtracking
//! line search that never leaves the barrier's domain. Slow and simple;
//! only meant for N ≤ 12.

use bgcn_core::distance::DistanceMatrix;

pub struct OracleSolution {
    pub n: usize,
    /// Row-major dense symmetric weights.
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl OracleSolution {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }
}

/// Scalar-loop objective over a dense symmetric weight matrix.
pub fn naive_objective(n: usize, a: &[f64], z: &[f64], alpha: f64, beta: f64) -> f64 {
    let mut l1 = 0.0;
    let mut fro = 0.0;
    let mut logdeg = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let v = a[i * n + j];
            l1 += (v * z[i * n + j]).abs();
            fro += v * v;
            row += v;
        }
        if row <= 0.0 {
            return f64::INFINITY;
        }
        logdeg += row.ln();
    }
    l1 - alpha * logdeg + beta * fro
}

fn pair_index(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect()
}

fn eval(n: usize, pairs: &[(usize, usize)], w: &[f64], z: &[f64], alpha: f64, beta: f64) -> f64 {
    let mut deg = vec![0.0; n];
    let mut f = 0.0;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        deg[i] += w[k];
        deg[j] += w[k];
        f += 2.0 * z[k] * w[k] + 2.0 * beta * w[k] * w[k];
    }
    for d in deg {
        if d <= 0.0 {
            return f64::INFINITY;
        }
        f -= alpha * d.ln();
    }
    f
}

pub fn learn_graph_oracle(z: &DistanceMatrix, alpha: f64, beta: f64) -> OracleSolution {
    let n = z.num_nodes();
    assert!(n <= 12, "oracle is for tiny problems");
    let pairs = pair_index(n);
    let zv: Vec<f64> = pairs.iter().map(|&(i, j)| z.get(i, j).unwrap()).collect();
    let mut w = vec![1.0; pairs.len()];
    let mut f = eval(n, &pairs, &w, &zv, alpha, beta);
    let mut t = 1.0;
    let mut iterations = 0;
    for it in 0..2_000_000 {
        iterations = it + 1;
        let mut deg = vec![0.0; n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            deg[i] += w[k];
            deg[j] += w[k];
        }
        let g: Vec<f64> = pairs
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| 2.0 * zv[k] + 4.0 * beta * w[k] - alpha / deg[i] - alpha / deg[j])
            .collect();
        t *= 2.0;
        let (trial, ft) = loop {
            let trial: Vec<f64> = w
                .iter()
                .zip(&g)
                .map(|(x, gx)| (x - t * gx).max(0.0))
                .collect();
            let ft = eval(n, &pairs, &trial, &zv, alpha, beta);
            let mut model = f;
            for k in 0..w.len() {
                let dx = trial[k] - w[k];
                model += g[k] * dx + dx * dx / (2.0 * t);
            }
            if ft.is_finite() && ft <= model {
                break (trial, ft);
            }
            t *= 0.5;
            assert!(t > 1e-30, "oracle line search collapsed");
        };
        let change: f64 = trial
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = trial.iter().map(|x| x * x).sum::<f64>().sqrt();
        w = trial;
        f = ft;
        if change <= 1e-10 * norm.max(1e-300) {
            break;
        }
    }
    let mut weights = vec![0.0; n * n];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        weights[i * n + j] = w[k];
        weights[j * n + i] = w[k];
    }
    OracleSolution {
        n,
        weights,
        objective: f,
        iterations,
    }
}
