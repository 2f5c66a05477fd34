use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes
                .iter()
                .map(|&(r, c)| DenseMatrix::zeros(r, c))
                .collect(),
            v: shapes
                .iter()
                .map(|&(r, c)| DenseMatrix::zeros(r, c))
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [&mut DenseMatrix],
    grads: &[&DenseMatrix],
    state: &mut AdamState,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape(format!(
                "adam: param {:?}, grad {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite("adam gradient".into()));
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].as_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (idx, w) in p.as_mut_slice().iter_mut().enumerate() {
            m[idx] = beta1 * m[idx] + (1.0 - beta1) * g[idx];
            v[idx] = beta2 * v[idx] + (1.0 - beta2) * g[idx] * g[idx];
            let mhat = m[idx] / c1;
            let vhat = v[idx] / c2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut w = DenseMatrix::from_fn(2, 3, |i, j| (i + j) as f64 * 0.3);
        let before = w.clone();
        let g = DenseMatrix::zeros(2, 3);
        let mut st = AdamState::new(AdamConfig::default(), &[(2, 3)]);
        for _ in 0..5 {
            adam_step(&mut [&mut w], &[&g], &mut st).unwrap();
        }
        assert!(w.max_abs_diff(&before) < 1e-12);
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first update exactly lr * sign(g) (up to eps)
        let mut w = DenseMatrix::zeros(1, 2);
        let g = DenseMatrix::from_vec(1, 2, vec![3.0, -0.5]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &[(1, 2)]);
        adam_step(&mut [&mut w], &[&g], &mut st).unwrap();
        assert!((w.get(0, 0) + 0.01).abs() < 1e-9);
        assert!((w.get(0, 1) - 0.01).abs() < 1e-9);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut w = DenseMatrix::from_vec(1, 1, vec![3.0]).unwrap();
        let mut st = AdamState::new(
            AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
            &[(1, 1)],
        );
        for _ in 0..500 {
            let g = w.map(|x| 2.0 * x);
            adam_step(&mut [&mut w], &[&g], &mut st).unwrap();
        }
        assert!(w.get(0, 0).abs() < 1e-2);
    }

    #[test]
    fn shape_mismatch() {
        let mut w = DenseMatrix::zeros(1, 2);
        let g = DenseMatrix::zeros(2, 1);
        let mut st = AdamState::new(AdamConfig::default(), &[(1, 2)]);
        assert!(adam_step(&mut [&mut w], &[&g], &mut st).is_err());
    }
}
