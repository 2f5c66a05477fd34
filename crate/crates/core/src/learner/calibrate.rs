//! Bisection on the single sparsity parameter θ.
//!
//! At θ the `(1, 1)` problem is solved on `Z/θ`; equivalently `α = β = θ` on
//! `Z`. Larger θ shrinks distances relative to the barrier and yields denser
//! graphs.

use serde::{Deserialize, Serialize};

use super::solver::PairProblem;
use super::{pair_problem, solve_problem, GraphLearnConfig, LearnedGraph, WarmState};
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub target_mean_degree: f64,
    /// Accepted relative deviation from the target.
    pub tolerance: f64,
    pub max_bisections: usize,
    /// Geometric bracket growth steps before giving up.
    pub max_expansions: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target_mean_degree: 4.0,
            tolerance: 0.2,
            max_bisections: 20,
            max_expansions: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub mean_degree: f64,
}

#[derive(Clone, Debug)]
pub struct Calibration {
    pub theta: f64,
    pub mean_degree: f64,
    /// Solution at `theta`, objective and trace expressed for `α = β = θ` on `Z`.
    pub learned: LearnedGraph,
    /// Every evaluated θ, sorted ascending.
    pub sweep: Vec<SweepPoint>,
}

/// Mean number of edges per node with weight above `floor`.
pub fn mean_degree_above(g: &crate::SparseGraph, floor: f64) -> f64 {
    if g.num_nodes() == 0 {
        return 0.0;
    }
    let e = g.upper_edges().filter(|&(_, _, w)| w > floor).count();
    2.0 * e as f64 / g.num_nodes() as f64
}

struct Evaluator<'a> {
    base: PairProblem,
    z: &'a DistanceMatrix,
    solver: GraphLearnConfig,
    evaluated: Vec<(f64, f64, LearnedGraph, WarmState)>,
}

impl Evaluator<'_> {
    fn eval(&mut self, theta: f64) -> Result<f64> {
        let mut prob = self.base.clone();
        prob.z.iter_mut().for_each(|v| *v /= theta);
        let scaled = super::scale_distances(self.z, 1.0 / theta);
        let warm = self
            .evaluated
            .iter()
            .min_by(|a, b| {
                let da = (a.0.ln() - theta.ln()).abs();
                let db = (b.0.ln() - theta.ln()).abs();
                da.total_cmp(&db)
            })
            .map(|e| e.3.clone());
        let (mut lg, state) = solve_problem(&prob, &scaled, &self.solver, warm.as_ref())?;
        lg.objective *= theta;
        lg.trace.iter_mut().for_each(|t| t.1 *= theta);
        let deg = mean_degree_above(&lg.graph, self.solver.weight_floor);
        log::debug!("calibrate: theta={theta:.6e} mean_degree={deg:.3}");
        self.evaluated.push((theta, deg, lg, state));
        Ok(deg)
    }

    fn finish(mut self, k: usize) -> Calibration {
        let (theta, mean_degree, learned, _) = self.evaluated.swap_remove(k);
        let mut sweep: Vec<SweepPoint> = self
            .evaluated
            .iter()
            .map(|e| SweepPoint {
                theta: e.0,
                mean_degree: e.1,
            })
            .chain(std::iter::once(SweepPoint { theta, mean_degree }))
            .collect();
        sweep.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        Calibration {
            theta,
            mean_degree,
            learned,
            sweep,
        }
    }
}

/// Finds θ whose solution has mean degree within `tolerance` of the target.
///
/// Only the solver fields of `solver` are used; α and β are replaced by θ.
/// Fails with [`Error::Unattainable`] carrying the closest achieved degree.
pub fn calibrate_sparsity(
    z: &DistanceMatrix,
    cfg: &CalibrationConfig,
    solver: &GraphLearnConfig,
) -> Result<Calibration> {
    let target = cfg.target_mean_degree;
    if !(target >= 1.0 && target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target mean degree {target} must be >= 1"
        )));
    }
    if !(cfg.tolerance > 0.0 && cfg.tolerance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance {}",
            cfg.tolerance
        )));
    }
    let solver = GraphLearnConfig {
        alpha: 1.0,
        beta: 1.0,
        ..solver.clone()
    };
    solver.validate()?;
    let base = pair_problem(z)?;
    let positive: Vec<f64> = base.z.iter().copied().filter(|v| *v > 0.0).collect();
    let theta0 = if positive.is_empty() {
        1.0
    } else {
        positive.iter().sum::<f64>() / positive.len() as f64
    };
    let mut ev = Evaluator {
        base,
        z,
        solver,
        evaluated: Vec::new(),
    };
    let band = |d: f64| (d - target).abs() <= cfg.tolerance * target;

    let d0 = ev.eval(theta0)?;
    if band(d0) {
        return Ok(ev.finish(0));
    }
    // bracket: d(lo) < target < d(hi)
    let (mut lo, mut hi) = (theta0, theta0);
    let mut bracketed = false;
    let grow = d0 < target;
    let mut d_prev = d0;
    for _ in 0..cfg.max_expansions {
        let theta = if grow { hi * 4.0 } else { lo / 4.0 };
        let d = ev.eval(theta)?;
        if band(d) {
            let k = ev.evaluated.len() - 1;
            return Ok(ev.finish(k));
        }
        if grow {
            lo = hi;
            hi = theta;
            if d > target {
                bracketed = true;
                break;
            }
        } else {
            hi = lo;
            lo = theta;
            if d < target {
                bracketed = true;
                break;
            }
        }
        // saturated: nothing left to gain in this direction
        if d == d_prev && (d >= (z.num_nodes() - 1) as f64 || d <= 1.0) {
            break;
        }
        d_prev = d;
    }
    if bracketed {
        for _ in 0..cfg.max_bisections {
            let mid = (lo * hi).sqrt();
            let d = ev.eval(mid)?;
            if band(d) {
                let k = ev.evaluated.len() - 1;
                return Ok(ev.finish(k));
            }
            if d < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let (k, closest) = ev
        .evaluated
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .1 - target).abs().total_cmp(&(b.1 .1 - target).abs()))
        .map(|(k, e)| (k, (e.0, e.1)))
        .expect("at least one evaluation");
    log::warn!(
        "sparsity target {target} not reached; closest {:.3} at theta {:.4e} (index {k})",
        closest.1,
        closest.0
    );
    Err(Error::Unattainable {
        target,
        achieved: closest.1,
        theta: closest.0,
    })
}
