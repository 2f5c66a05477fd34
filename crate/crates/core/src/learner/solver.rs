//! Forward-backward-forward primal-dual iteration over pair weights.
//!
//! With `w` the upper-triangular weights and `S` the linear map from pair
//! weights to node degrees, the objective is
//!
//! ```text
//! f(w) = [ι(w ≥ 0) + 2zᵀw]  +  [−α·1ᵀlog(Sw)]  +  [2β‖w‖²]
//!           prox: shift+clip    prox of conjugate     smooth, ∇ = 4βw
//! ```
//!
//! The degree term is handled through its conjugate, whose proximal map is
//! the closed-form root `(v − sqrt(v² + 4αγ)) / 2` per node.

use rayon::prelude::*;

use crate::error::{Error, Result};

const PAR_MIN: usize = 1 << 14;

fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    if out.len() >= PAR_MIN {
        out.par_iter_mut().enumerate().for_each(|(k, o)| *o = f(k));
    } else {
        out.iter_mut().enumerate().for_each(|(k, o)| *o = f(k));
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Pair variables with their distances and node incidence.
#[derive(Clone, Debug)]
pub(crate) struct PairProblem {
    pub n: usize,
    pub pairs: Vec<(u32, u32)>,
    pub z: Vec<f64>,
    inc_ptr: Vec<usize>,
    inc_pair: Vec<u32>,
}

impl PairProblem {
    pub fn new(n: usize, pairs: Vec<(u32, u32)>, z: Vec<f64>) -> Result<Self> {
        if pairs.len() != z.len() {
            return Err(Error::Shape("pairs and distances differ in length".into()));
        }
        if n > u32::MAX as usize || pairs.len() > u32::MAX as usize {
            return Err(Error::InvalidArgument(
                "problem too large for u32 indexing".into(),
            ));
        }
        if let Some(v) = z.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NonFinite(format!("distance {v}")));
        }
        let mut inc_ptr = vec![0usize; n + 1];
        for &(i, j) in &pairs {
            inc_ptr[i as usize + 1] += 1;
            inc_ptr[j as usize + 1] += 1;
        }
        for i in 0..n {
            inc_ptr[i + 1] += inc_ptr[i];
        }
        if let Some(i) = (0..n).find(|&i| inc_ptr[i] == inc_ptr[i + 1]) {
            return Err(Error::InvalidArgument(format!(
                "node {i} has no candidate edges"
            )));
        }
        let mut cursor = inc_ptr.clone();
        let mut inc_pair = vec![0u32; inc_ptr[n]];
        for (p, &(i, j)) in pairs.iter().enumerate() {
            for v in [i as usize, j as usize] {
                inc_pair[cursor[v]] = p as u32;
                cursor[v] += 1;
            }
        }
        Ok(Self {
            n,
            pairs,
            z,
            inc_ptr,
            inc_pair,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn max_support_degree(&self) -> usize {
        (0..self.n)
            .map(|i| self.inc_ptr[i + 1] - self.inc_ptr[i])
            .max()
            .unwrap_or(0)
    }

    /// `out = S·w` (node degrees).
    pub fn degrees_into(&self, w: &[f64], out: &mut [f64]) {
        fill(out, |i| {
            self.inc_pair[self.inc_ptr[i]..self.inc_ptr[i + 1]]
                .iter()
                .map(|&p| w[p as usize])
                .sum()
        });
    }

    pub fn degrees(&self, w: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        self.degrees_into(w, &mut d);
        d
    }

    /// `2zᵀw − α·Σ log(Sw) + 2β‖w‖²`; `+∞` when any degree is zero.
    pub fn objective(&self, w: &[f64], alpha: f64, beta: f64) -> f64 {
        let d = self.degrees(w);
        if d.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        let linear: f64 = self.z.iter().zip(w).map(|(z, w)| z * w).sum();
        let barrier: f64 = d.iter().map(|x| x.ln()).sum();
        2.0 * linear - alpha * barrier + 2.0 * beta * sq_norm(w)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct SolverSettings {
    pub alpha: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub step_factor: f64,
    pub check_every: usize,
    pub polish: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct PairSolution {
    /// Non-negative primal weights (output of the last primal proximal step).
    pub w: Vec<f64>,
    /// Primal iterate and dual degree variable, reusable as a warm start.
    pub state: (Vec<f64>, Vec<f64>),
    pub iterations: usize,
    pub converged: bool,
    /// `(iteration, objective)` at every check interval and at exit.
    pub trace: Vec<(usize, f64)>,
}

pub(crate) fn solve(
    prob: &PairProblem,
    s: &SolverSettings,
    warm: Option<&(Vec<f64>, Vec<f64>)>,
) -> Result<PairSolution> {
    if !(s.alpha > 0.0 && s.beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {} and beta {} must be positive",
            s.alpha, s.beta
        )));
    }
    if !(s.tol > 0.0) || !(s.step_factor > 0.0 && s.step_factor < 1.0) {
        return Err(Error::InvalidArgument(
            "tol must be positive and step_factor in (0, 1)".into(),
        ));
    }
    let m = prob.num_pairs();
    let n = prob.n;
    let (alpha, beta) = (s.alpha, s.beta);
    // ‖S‖² = λmax(signless Laplacian of the support) ≤ 2·max degree.
    let op_norm = (2.0 * prob.max_support_degree() as f64).sqrt();

    // The iteration runs on w' = c·w, which solves the (cα, β/c) problem
    // with the same dual optimum. c balances primal against dual magnitude.
    let mut c = 1.0;
    let (mut w, mut v) = match warm {
        Some((w0, v0)) if w0.len() == m && v0.len() == n => (w0.clone(), v0.clone()),
        _ => (vec![0.0; m], vec![0.0; n]),
    };
    if let Some(f) = balance_factor(&w, &v) {
        c = f;
        w.iter_mut().for_each(|x| *x *= f);
    }
    let mut y = vec![0.0; m];
    let mut p = vec![0.0; m];
    let mut q = vec![0.0; m];
    let mut ybar = vec![0.0; n];
    let mut pbar = vec![0.0; n];
    let mut deg = vec![0.0; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut polished = false;
    let mut last_polish = 0;
    let mut polish_gap = POLISH_FIRST_GAP;
    let mut next_balance = BALANCE_FIRST;
    let mut iterations = 0;
    let unscaled = |x: &[f64], c: f64| x.iter().map(|v| v / c).collect::<Vec<f64>>();

    for it in 1..=s.max_iter {
        iterations = it;
        let (a_s, b_s) = (alpha * c, beta / c);
        let gamma = s.step_factor / (4.0 * b_s + op_norm);
        prob.degrees_into(&w, &mut deg);
        {
            let (w, v, pairs, z) = (&w, &v, &prob.pairs, &prob.z);
            fill(&mut y, |k| {
                let (i, j) = pairs[k];
                w[k] - gamma * (4.0 * b_s * w[k] + v[i as usize] + v[j as usize])
            });
            fill(&mut p, |k| (y[k] - 2.0 * gamma * z[k]).max(0.0));
        }
        for i in 0..n {
            ybar[i] = v[i] + gamma * deg[i];
            pbar[i] = 0.5 * (ybar[i] - (ybar[i] * ybar[i] + 4.0 * a_s * gamma).sqrt());
        }
        prob.degrees_into(&p, &mut deg);
        {
            let (p, pbar, pairs) = (&p, &pbar, &prob.pairs);
            fill(&mut q, |k| {
                let (i, j) = pairs[k];
                p[k] - gamma * (4.0 * b_s * p[k] + pbar[i as usize] + pbar[j as usize])
            });
        }
        // w ← w − y + q and v ← v − ȳ + q̄, tracking the step sizes
        let mut dw = 0.0;
        for k in 0..m {
            let step = q[k] - y[k];
            w[k] += step;
            dw += step * step;
        }
        let mut dv = 0.0;
        for i in 0..n {
            let step = pbar[i] + gamma * deg[i] - ybar[i];
            v[i] += step;
            dv += step * step;
        }
        let rel_w = dw.sqrt() / sq_norm(&w).sqrt().max(f64::MIN_POSITIVE);
        let rel_v = dv.sqrt() / sq_norm(&v).sqrt().max(f64::MIN_POSITIVE);
        if !(rel_w.is_finite() && rel_v.is_finite()) {
            return Err(Error::NonFinite(format!("solver state at iteration {it}")));
        }
        let done = rel_w < s.tol && rel_v < s.tol;
        if done || it % s.check_every.max(1) == 0 || it == s.max_iter {
            trace.push((it, prob.objective(&unscaled(&p, c), alpha, beta)));
        }
        if done {
            converged = true;
            break;
        }
        // once near-stationary, try to certify the optimum directly
        if s.polish && rel_w.max(rel_v) < s.tol.sqrt() && it >= last_polish + polish_gap {
            last_polish = it;
            polish_gap *= 2;
            if let Some((refined, f)) = polish(prob, &unscaled(&p, c), alpha, beta) {
                p = refined;
                c = 1.0;
                w.clone_from(&p);
                trace.push((it, f));
                polished = true;
                converged = true;
                break;
            }
        }
        if it == next_balance {
            next_balance *= 2;
            if let Some(f) = balance_factor(&p, &v) {
                c *= f;
                w.iter_mut().for_each(|x| *x *= f);
                p.iter_mut().for_each(|x| *x *= f);
            }
        }
    }
    let mut p = if polished { p } else { unscaled(&p, c) };
    if s.polish && !polished {
        match polish(prob, &p, alpha, beta) {
            Some((refined, f)) => {
                p = refined;
                trace.push((iterations, f));
                converged = true;
            }
            None => log::debug!("active-set refinement rejected; keeping splitting iterate"),
        }
    }
    Ok(PairSolution {
        w: p,
        state: (unscaled(&w, c), v),
        iterations,
        converged,
        trace,
    })
}

const BALANCE_FIRST: usize = 16;
const BALANCE_RATIO: f64 = 4.0;

/// Rescaling of the primal iterate that brings `‖v‖ / ‖w‖` to
/// `BALANCE_RATIO`, or `None` when already within a factor of 2.
fn balance_factor(w: &[f64], v: &[f64]) -> Option<f64> {
    let (wn, vn) = (sq_norm(w).sqrt(), sq_norm(v).sqrt());
    if !(wn > 0.0 && vn > 0.0) {
        return None;
    }
    let f = vn / (BALANCE_RATIO * wn);
    (!(0.5..=2.0).contains(&f)).then_some(f.clamp(1e-6, 1e6))
}

const POLISH_FIRST_GAP: usize = 16;

/// Newton refinement on the active set `{w > 0}`.
///
/// The splitting iteration converges linearly; once its support is right
/// the remaining problem is smooth and strongly convex, so a few damped
/// Newton steps (Hessian solves by conjugate gradients) reach machine
/// precision. Returns the refined weights and objective only when they
/// satisfy the optimality conditions: zero gradient on active pairs,
/// non-negative gradient on inactive ones.
pub(crate) fn polish(
    prob: &PairProblem,
    w0: &[f64],
    alpha: f64,
    beta: f64,
) -> Option<(Vec<f64>, f64)> {
    const KKT_TOL: f64 = 1e-9;
    const MAX_NEWTON: usize = 20;
    let f0 = prob.objective(w0, alpha, beta);
    if !f0.is_finite() {
        return None;
    }
    let m = prob.num_pairs();
    let active: Vec<bool> = w0.iter().map(|&x| x > 0.0).collect();
    let mut w = w0.to_vec();
    let mut f = f0;
    let mut grad = vec![0.0; m];
    let mut step = vec![0.0; m];
    let gradient = |w: &[f64], d: &[f64], out: &mut [f64]| {
        let (pairs, z) = (&prob.pairs, &prob.z);
        fill(out, |k| {
            let (i, j) = pairs[k];
            2.0 * z[k] + 4.0 * beta * w[k] - alpha / d[i as usize] - alpha / d[j as usize]
        });
    };
    let mut newton_steps = 0;
    loop {
        let d = prob.degrees(&w);
        gradient(&w, &d, &mut grad);
        let scale = d.iter().map(|x| alpha / x).fold(0.0, f64::max);
        let active_gmax = grad
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(g, _)| g.abs())
            .fold(0.0, f64::max);
        if active_gmax <= 0.1 * KKT_TOL * scale || newton_steps >= MAX_NEWTON {
            let kkt = grad.iter().zip(&active).all(|(&g, &a)| {
                if a {
                    g.abs() <= KKT_TOL * scale
                } else {
                    g >= -KKT_TOL * scale
                }
            });
            return (kkt && f <= f0 + 1e-12 * f0.abs()).then_some((w, f));
        }
        newton_steps += 1;
        for (g, &a) in grad.iter_mut().zip(&active) {
            if !a {
                *g = 0.0;
            }
        }
        let hess_diag: Vec<f64> = d.iter().map(|x| alpha / (x * x)).collect();
        conjugate_gradient(prob, &active, beta, &hess_diag, &grad, &mut step);
        let decrement: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        if !(decrement > 0.0) {
            return None;
        }
        // the Newton direction is −step; damp until positive and decreasing
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(x, s)| x - t * s).collect();
            if trial.iter().zip(&active).any(|(x, &a)| a && *x <= 0.0) {
                if t == 1.0 {
                    // a full step leaves the active set: the support is wrong
                    return None;
                }
            } else {
                let ft = prob.objective(&trial, alpha, beta);
                if ft <= f - 1e-4 * t * decrement || (t == 1.0 && ft <= f) {
                    next = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        match next {
            Some((trial, ft)) => {
                w = trial;
                f = ft;
            }
            // at rounding level or blocked by the boundary; the optimality
            // check decides
            None => newton_steps = MAX_NEWTON,
        }
    }
}

/// Solves `(4βI + Sᵀ diag(h) S) x = b` restricted to active coordinates.
fn conjugate_gradient(
    prob: &PairProblem,
    active: &[bool],
    beta: f64,
    h: &[f64],
    b: &[f64],
    x: &mut [f64],
) {
    let m = prob.num_pairs();
    let apply = |v: &[f64], out: &mut [f64]| {
        let sv = prob.degrees(v);
        let hs: Vec<f64> = sv.iter().zip(h).map(|(a, b)| a * b).collect();
        let pairs = &prob.pairs;
        fill(out, |k| {
            if !active[k] {
                return 0.0;
            }
            let (i, j) = pairs[k];
            4.0 * beta * v[k] + hs[i as usize] + hs[j as usize]
        });
    };
    x.iter_mut().for_each(|v| *v = 0.0);
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let mut rr = sq_norm(&r);
    let stop = rr * 1e-28;
    for _ in 0..m.min(500) {
        if rr <= stop || rr == 0.0 {
            break;
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let a = rr / pap;
        for k in 0..m {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
        }
        let rr_new = sq_norm(&r);
        let bk = rr_new / rr;
        rr = rr_new;
        for k in 0..m {
            p[k] = r[k] + bk * p[k];
        }
    }
}
