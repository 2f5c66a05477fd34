//! MAP graph learning from pairwise distances.
//!
//! Minimizes `‖A∘Z‖₁,₁ − α·1ᵀlog(A1) + β‖A‖²_F` over symmetric non-negative
//! adjacencies with zero diagonal. Only the upper triangle is optimized, so
//! symmetry holds by construction.

mod calibrate;
mod solver;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub use calibrate::{calibrate_sparsity, Calibration, CalibrationConfig, SweepPoint};
use solver::{PairProblem, SolverSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphLearnConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_iter: usize,
    /// Relative change of both primal and dual iterates between iterations.
    pub tol: f64,
    /// Fraction of the largest stable step; in `(0, 1)`.
    pub step_factor: f64,
    /// Objective is recorded every this many iterations.
    pub check_every: usize,
    /// Weights at or below this are dropped from the learned graph.
    pub weight_floor: f64,
    /// Newton refinement on the converged support.
    pub polish: bool,
}

impl Default for GraphLearnConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            max_iter: 5000,
            tol: 1e-6,
            step_factor: 0.9,
            check_every: 10,
            weight_floor: 1e-8,
            polish: true,
        }
    }
}

impl GraphLearnConfig {
    /// One-parameter form: `α = β = θ`, under which the solution is that of
    /// `(1, 1)` on `Z/θ` with unit scale.
    pub fn from_theta(theta: f64) -> Self {
        Self {
            alpha: theta,
            beta: theta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha.is_finite()
            && self.beta > 0.0
            && self.beta.is_finite()
            && self.tol > 0.0
            && self.step_factor > 0.0
            && self.step_factor < 1.0
            && self.max_iter > 0
            && self.weight_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "graph learn config {self:?}"
            )))
        }
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings {
            alpha: self.alpha,
            beta: self.beta,
            max_iter: self.max_iter,
            tol: self.tol,
            step_factor: self.step_factor,
            check_every: self.check_every,
            polish: self.polish,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnedGraph {
    pub graph: SparseGraph,
    /// Objective of `graph` (after flooring) under the solve's `Z, α, β`.
    pub objective: f64,
    pub iterations: usize,
    /// False when `max_iter` was hit before the tolerance.
    pub converged: bool,
    /// `(iteration, objective)` of the primal iterate at check intervals.
    pub trace: Vec<(usize, f64)>,
}

impl LearnedGraph {
    /// Writes `edges.tsv` (`i<TAB>j`, `i < j`) and `weights.tsv` (one weight
    /// per edge line, same order).
    pub fn write_edges(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut edges = String::new();
        let mut weights = String::new();
        for (i, j, w) in self.graph.upper_edges() {
            writeln!(edges, "{i}\t{j}").unwrap();
            writeln!(weights, "{w:e}").unwrap();
        }
        let ep = dir.join("edges.tsv");
        std::fs::write(&ep, edges).map_err(|e| Error::io(&ep, e))?;
        let wp = dir.join("weights.tsv");
        std::fs::write(&wp, weights).map_err(|e| Error::io(&wp, e))
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("iteration,objective\n");
        for (it, obj) in &self.trace {
            writeln!(out, "{it},{obj:e}").unwrap();
        }
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Reads back a graph written by [`LearnedGraph::write_edges`].
pub fn read_edges(dir: impl AsRef<Path>, num_nodes: usize) -> Result<SparseGraph> {
    let dir = dir.as_ref();
    let ep = dir.join("edges.tsv");
    let wp = dir.join("weights.tsv");
    let edges = std::fs::read_to_string(&ep).map_err(|e| Error::io(&ep, e))?;
    let weights = std::fs::read_to_string(&wp).map_err(|e| Error::io(&wp, e))?;
    let bad = |line: usize| Error::Bundle(format!("{}: malformed line {line}", ep.display()));
    let mut triples = Vec::new();
    let mut wl = weights.lines();
    for (k, line) in edges.lines().enumerate() {
        let mut f = line.split('\t');
        let i: usize = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(k + 1))?;
        let j: usize = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(k + 1))?;
        let w: f64 = wl
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Bundle(format!("{}: missing weight {}", wp.display(), k + 1)))?;
        triples.push((i, j, w));
    }
    if wl.next().is_some() {
        return Err(Error::Bundle(format!(
            "{}: more weights than edges",
            wp.display()
        )));
    }
    SparseGraph::from_edges(num_nodes, triples)
}

/// Objective value of `a` under distances `z`; `+∞` if any node is isolated.
///
/// Every edge of `a` must lie on the support of `z`.
pub fn objective(a: &SparseGraph, z: &DistanceMatrix, alpha: f64, beta: f64) -> Result<f64> {
    if a.num_nodes() != z.num_nodes() {
        return Err(Error::Shape(format!(
            "graph has {} nodes, distances {}",
            a.num_nodes(),
            z.num_nodes()
        )));
    }
    let mut linear = 0.0;
    let mut quad = 0.0;
    for (i, j, w) in a.upper_edges() {
        let zij = z
            .get(i, j)
            .ok_or_else(|| Error::Shape(format!("edge ({i}, {j}) outside distance support")))?;
        linear += zij * w;
        quad += w * w;
    }
    let mut barrier = 0.0;
    for i in 0..a.num_nodes() {
        let d = a.weighted_degree(i);
        if d <= 0.0 {
            return Ok(f64::INFINITY);
        }
        barrier += d.ln();
    }
    Ok(2.0 * linear - alpha * barrier + 2.0 * beta * quad)
}

/// `(Z/√(αβ), √(α/β))`: solving `(1, 1)` on the first and scaling by the
/// second reproduces the `(α, β)` solution.
pub fn reduce_to_one_param(
    z: &DistanceMatrix,
    alpha: f64,
    beta: f64,
) -> Result<(DistanceMatrix, f64)> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} and beta {beta} must be positive"
        )));
    }
    let s = (alpha * beta).sqrt();
    Ok((scale_distances(z, 1.0 / s), (alpha / beta).sqrt()))
}

pub(crate) fn scale_distances(z: &DistanceMatrix, factor: f64) -> DistanceMatrix {
    match z {
        DistanceMatrix::Dense { n, values } => DistanceMatrix::Dense {
            n: *n,
            values: values.iter().map(|v| v * factor).collect(),
        },
        DistanceMatrix::Support { n, pairs, values } => DistanceMatrix::Support {
            n: *n,
            pairs: pairs.clone(),
            values: values.iter().map(|v| v * factor).collect(),
        },
    }
}

fn pair_problem(z: &DistanceMatrix) -> Result<PairProblem> {
    z.validate()?;
    let n = z.num_nodes();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "graph learning needs at least 2 nodes, got {n}"
        )));
    }
    let (pairs, values): (Vec<_>, Vec<_>) = z
        .upper_entries()
        .map(|(i, j, v)| ((i as u32, j as u32), v))
        .unzip();
    PairProblem::new(n, pairs, values)
}

/// Solves over all pairs when `z` is dense, or over its support otherwise.
pub fn learn_graph(z: &DistanceMatrix, cfg: &GraphLearnConfig) -> Result<LearnedGraph> {
    cfg.validate()?;
    let prob = pair_problem(z)?;
    solve_problem(&prob, z, cfg, None).map(|(g, _)| g)
}

/// Solves only over the stored pairs of a support-restricted `z`.
pub fn learn_graph_restricted(z: &DistanceMatrix, cfg: &GraphLearnConfig) -> Result<LearnedGraph> {
    if z.is_dense() {
        return Err(Error::InvalidArgument(
            "learn_graph_restricted expects a support-restricted distance matrix".into(),
        ));
    }
    learn_graph(z, cfg)
}

type WarmState = (Vec<f64>, Vec<f64>);

fn solve_problem(
    prob: &PairProblem,
    z: &DistanceMatrix,
    cfg: &GraphLearnConfig,
    warm: Option<&WarmState>,
) -> Result<(LearnedGraph, WarmState)> {
    let sol = solver::solve(prob, &cfg.settings(), warm)?;
    if !sol.converged {
        log::warn!(
            "graph solver stopped at max_iter={} before reaching tol={:e}",
            cfg.max_iter,
            cfg.tol
        );
    }
    let graph = floor_weights(prob, &sol.w, cfg.weight_floor)?;
    let objective = objective(&graph, z, cfg.alpha, cfg.beta)?;
    Ok((
        LearnedGraph {
            graph,
            objective,
            iterations: sol.iterations,
            converged: sol.converged,
            trace: sol.trace,
        },
        sol.state,
    ))
}

/// Drops weights at or below `floor`, but keeps each node's largest incident
/// weight so that no node ends up isolated.
fn floor_weights(prob: &PairProblem, w: &[f64], floor: f64) -> Result<SparseGraph> {
    let mut keep: Vec<bool> = w.iter().map(|&x| x > floor).collect();
    let mut best: Vec<Option<usize>> = vec![None; prob.n];
    let mut covered = vec![false; prob.n];
    for (k, &(i, j)) in prob.pairs.iter().enumerate() {
        for v in [i as usize, j as usize] {
            if keep[k] {
                covered[v] = true;
            }
            if w[k] > 0.0 && best[v].is_none_or(|b| w[k] > w[b]) {
                best[v] = Some(k);
            }
        }
    }
    for v in 0..prob.n {
        if !covered[v] {
            match best[v] {
                Some(k) => keep[k] = true,
                None => {
                    return Err(Error::NonFinite(format!(
                        "node {v} has zero degree in the learned graph"
                    )))
                }
            }
        }
    }
    let upper: Vec<(usize, usize, f64)> = prob
        .pairs
        .iter()
        .zip(w)
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|((&(i, j), &x), _)| (i as usize, j as usize, x))
        .collect();
    Ok(SparseGraph::from_sorted_upper(prob.n, &upper))
}
