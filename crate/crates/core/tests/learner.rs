mod common;

use bgcn_core::distance::DistanceMatrix;
use bgcn_core::learner::{
    learn_graph, learn_graph_restricted, objective, reduce_to_one_param, GraphLearnConfig,
};
use bgcn_core::{SeededRng, SparseGraph};
use common::oracle::{learn_graph_oracle, naive_objective};
use common::{dense_values, random_dense, random_points};
use proptest::prelude::*;

fn two_node(z: f64) -> DistanceMatrix {
    DistanceMatrix::Dense {
        n: 2,
        values: vec![0.0, z, z, 0.0],
    }
}

fn linf(a: &SparseGraph, b: &SparseGraph) -> f64 {
    let n = a.num_nodes();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            m = m.max((a.weight(i, j) - b.weight(i, j)).abs());
        }
    }
    m
}

#[test]
fn oracle_closed_forms() {
    for (z, expect) in [(1.0, 0.5), (0.0, 8f64.sqrt() / 4.0)] {
        let o = learn_graph_oracle(&two_node(z), 1.0, 1.0);
        assert!((o.weight(0, 1) - expect).abs() < 1e-8, "{}", o.weight(0, 1));
    }
}

#[test]
fn objective_matches_scalar_loop() {
    let mut rng = SeededRng::new(11);
    for _ in 0..10 {
        let z = random_dense(5, 2.0, &mut rng);
        let (n, zd) = dense_values(&z);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.uniform() < 0.7 {
                    edges.push((i, j, rng.uniform() * 3.0));
                }
            }
        }
        let g = SparseGraph::from_edges(n, edges).unwrap();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = g.weight(i, j);
            }
        }
        let (alpha, beta) = (0.5 + rng.uniform(), 0.5 + rng.uniform());
        let lib = objective(&g, &z, alpha, beta).unwrap();
        let naive = naive_objective(n, &a, &zd, alpha, beta);
        if naive.is_infinite() {
            assert_eq!(lib, naive);
        } else {
            assert!(
                (lib - naive).abs() <= 1e-12 * naive.abs().max(1.0),
                "{lib} vs {naive}"
            );
        }
    }
}

#[test]
fn agrees_with_oracle_on_small_instances() {
    let mut rng = SeededRng::new(5);
    for n in [6usize, 8] {
        for _ in 0..5 {
            let z = random_dense(n, 2.0, &mut rng);
            let lg = learn_graph(&z, &GraphLearnConfig::default()).unwrap();
            let o = learn_graph_oracle(&z, 1.0, 1.0);
            let gap = (lg.objective - o.objective).abs() / o.objective.abs().max(1e-12);
            assert!(gap <= 1e-6, "n={n}: objective gap {gap}");
            let mut err: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    err = err.max((lg.graph.weight(i, j) - o.weight(i, j)).abs());
                }
            }
            assert!(err <= 1e-4, "n={n}: weight gap {err}");
        }
    }
}

#[test]
fn restricted_support_close_to_dense() {
    // scaled so the dense optimum is sparse (mean degree near 8)
    let mut rng = SeededRng::new(21);
    let (z, _) = reduce_to_one_param(&random_points(50, &mut rng), 0.1, 0.1).unwrap();
    let (n, zd) = dense_values(&z);
    let k = 15;
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| zd[i * n + a].total_cmp(&zd[i * n + b]).then(a.cmp(&b)));
        for &j in &order[..k] {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
    let values = pairs.iter().map(|&(i, j)| zd[i * n + j]).collect();
    let zs = DistanceMatrix::Support { n, pairs, values };
    let cfg = GraphLearnConfig::default();
    let dense = learn_graph(&z, &cfg).unwrap();
    let restricted = learn_graph_restricted(&zs, &cfg).unwrap();
    let rel = (restricted.objective - dense.objective).abs() / dense.objective.abs();
    assert!(
        rel <= 0.05,
        "restricted {} dense {}",
        restricted.objective,
        dense.objective
    );
    assert!(restricted.objective >= dense.objective - 1e-9 * dense.objective.abs());
}

#[test]
fn scaling_identity() {
    let mut rng = SeededRng::new(33);
    for _ in 0..10 {
        let n = 3 + rng.index(4);
        let z = random_dense(n, 2.0, &mut rng);
        let alpha = (4.0 * rng.uniform() - 2.0).exp();
        let beta = (4.0 * rng.uniform() - 2.0).exp();
        let direct = learn_graph(
            &z,
            &GraphLearnConfig {
                alpha,
                beta,
                ..Default::default()
            },
        )
        .unwrap();
        let (zr, scale) = reduce_to_one_param(&z, alpha, beta).unwrap();
        let reduced = learn_graph(&zr, &GraphLearnConfig::default()).unwrap();
        for i in 0..n {
            for j in 0..n {
                let d = (direct.graph.weight(i, j) - scale * reduced.graph.weight(i, j)).abs();
                assert!(d <= 1e-6, "({i},{j}) off by {d}");
            }
        }
    }
}

#[test]
fn increasing_a_distance_never_increases_its_weight() {
    let mut rng = SeededRng::new(44);
    let cfg = GraphLearnConfig::default();
    for _ in 0..4 {
        let n = 4 + rng.index(3);
        let z = random_dense(n, 1.0, &mut rng);
        let (_, mut zd) = dense_values(&z);
        let (i, j) = (0, 1 + rng.index(n - 1));
        let mut last = f64::INFINITY;
        for step in 0..8 {
            let v = 0.25 * step as f64;
            zd[i * n + j] = v;
            zd[j * n + i] = v;
            let zz = DistanceMatrix::Dense {
                n,
                values: zd.clone(),
            };
            let w = learn_graph(&zz, &cfg).unwrap().graph.weight(i, j);
            assert!(w <= last + 1e-9, "z={v}: {w} > {last}");
            last = w;
        }
    }
}

#[test]
fn different_step_factors_reach_same_solution() {
    let mut rng = SeededRng::new(55);
    let z = random_dense(7, 2.0, &mut rng);
    let a = learn_graph(&z, &GraphLearnConfig::default()).unwrap();
    let b = learn_graph(
        &z,
        &GraphLearnConfig {
            step_factor: 0.5,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(linf(&a.graph, &b.graph) <= 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn learned_graph_invariants(seed in any::<u64>(), n in 2usize..9, alpha in 0.1f64..5.0, beta in 0.1f64..5.0) {
        let mut rng = SeededRng::new(seed);
        let z = random_dense(n, 3.0, &mut rng);
        let cfg = GraphLearnConfig { alpha, beta, ..Default::default() };
        let lg = learn_graph(&z, &cfg).unwrap();
        lg.graph.validate().unwrap();
        for i in 0..n {
            prop_assert_eq!(lg.graph.weight(i, i), 0.0);
            prop_assert!(lg.graph.weighted_degree(i) > 0.0);
            for j in 0..n {
                prop_assert_eq!(lg.graph.weight(i, j), lg.graph.weight(j, i));
                prop_assert!(lg.graph.weight(i, j) >= 0.0);
            }
        }
        let finite: Vec<f64> = lg.trace.iter().map(|t| t.1).filter(|v| v.is_finite()).collect();
        for w in finite.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn objective_never_below_oracle(seed in any::<u64>(), n in 2usize..6) {
        let mut rng = SeededRng::new(seed);
        let z = random_dense(n, 2.0, &mut rng);
        let lg = learn_graph(&z, &GraphLearnConfig::default()).unwrap();
        let o = learn_graph_oracle(&z, 1.0, 1.0);
        prop_assert!((lg.objective - o.objective).abs() <= 1e-6 * o.objective.abs().max(1.0));
    }
}
