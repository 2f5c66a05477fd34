//! Two-layer GCN: `logits = Â · relu(Â · X · W0) · W1`.
//!
//! Training follows the usual semi-supervised recipe: Adam, dropout on the
//! inputs of both layers, L2 penalty on the first layer only, and early
//! stopping on validation loss. The same network drawn with dropout left on
//! at prediction time gives the Monte Carlo dropout predictive samples.

use std::borrow::Cow;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabelInfo, NodeFeatures, NormalizedAdjacency};
use crate::nn::{
    adam_step, dropout_mask, glorot_init, relu, relu_backward, row_softmax, softmax_xent, spmm,
    AdamConfig, AdamState, DenseMatrix, SeededRng,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub dropout: f64,
    /// L2 coefficient on `W0`; the penalty is `weight_decay / 2 · ‖W0‖²`.
    pub weight_decay: f64,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            dropout: 0.5,
            weight_decay: 5e-4,
            lr: 0.01,
            max_epochs: 200,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "gcn hidden, max_epochs and patience must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "gcn dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(
                "gcn lr must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    /// `d × h`
    pub w0: DenseMatrix,
    /// `h × C`
    pub w1: DenseMatrix,
}

#[derive(Serialize, Deserialize)]
struct ParamHeader {
    shapes: Vec<(usize, usize)>,
}

impl GcnParams {
    pub fn init(dim: usize, hidden: usize, classes: usize, rng: &mut SeededRng) -> Self {
        let w0 = glorot_init(dim, hidden, rng);
        let w1 = glorot_init(hidden, classes, rng);
        Self { w0, w1 }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w0: DenseMatrix::zeros(self.w0.rows(), self.w0.cols()),
            w1: DenseMatrix::zeros(self.w1.rows(), self.w1.cols()),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [self.w0.as_slice(), self.w1.as_slice()].concat()
    }

    /// Inverse of [`GcnParams::to_flat`] using `self`'s shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let n0 = self.w0.rows() * self.w0.cols();
        if flat.len() != n0 + self.w1.rows() * self.w1.cols() {
            return Err(Error::Shape(format!("{} flat gcn params", flat.len())));
        }
        Ok(Self {
            w0: DenseMatrix::from_vec(self.w0.rows(), self.w0.cols(), flat[..n0].to_vec())?,
            w1: DenseMatrix::from_vec(self.w1.rows(), self.w1.cols(), flat[n0..].to_vec())?,
        })
    }

    /// Writes a one-line JSON shape header followed by little-endian f64 values.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = ParamHeader {
            shapes: vec![self.w0.shape(), self.w1.shape()],
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&header).expect("header serializes")
        )?;
        for v in self.to_flat() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::io("<gcn params>", e))?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::InvalidArgument("gcn params: missing header".into()))?;
        let header: ParamHeader = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| Error::InvalidArgument(format!("gcn params header: {e}")))?;
        if header.shapes.len() != 2 {
            return Err(Error::InvalidArgument(
                "gcn params: expected two tensors".into(),
            ));
        }
        let body = &bytes[nl + 1..];
        let total: usize = header.shapes.iter().map(|(r, c)| r * c).sum();
        if body.len() != total * 8 {
            return Err(Error::InvalidArgument(format!(
                "gcn params: {} payload bytes for {total} values",
                body.len()
            )));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (r0, c0) = header.shapes[0];
        let (r1, c1) = header.shapes[1];
        Ok(Self {
            w0: DenseMatrix::from_vec(r0, c0, flat[..r0 * c0].to_vec())?,
            w1: DenseMatrix::from_vec(r1, c1, flat[r0 * c0..].to_vec())?,
        })
    }

    fn check(&self, adj: &NormalizedAdjacency, x: &NodeFeatures) -> Result<()> {
        if x.num_nodes() != adj.num_nodes() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} graph nodes",
                x.num_nodes(),
                adj.num_nodes()
            )));
        }
        if self.w0.rows() != x.dim() || self.w0.cols() != self.w1.rows() {
            return Err(Error::Shape(format!(
                "gcn weights {:?}, {:?} for feature dim {}",
                self.w0.shape(),
                self.w1.shape(),
                x.dim()
            )));
        }
        Ok(())
    }
}

struct Forward<'x> {
    x_in: Cow<'x, NodeFeatures>,
    pre: DenseMatrix,
    hidden: DenseMatrix,
    mask: Option<DenseMatrix>,
    logits: DenseMatrix,
}

fn forward<'x>(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &'x NodeFeatures,
    dropout: Option<(f64, &mut SeededRng)>,
) -> Result<Forward<'x>> {
    params.check(adj, x)?;
    let (x_in, mask, rng) = match dropout {
        Some((rate, rng)) if rate > 0.0 => {
            let xd = x.dropout(rate, rng);
            (Cow::Owned(xd), Some(rate), Some(rng))
        }
        _ => (Cow::Borrowed(x), None, None),
    };
    let pre = spmm(adj, &x_in.matmul(&params.w0)?)?;
    let mut hidden = relu(&pre);
    let mask = match (mask, rng) {
        (Some(rate), Some(rng)) => {
            let m = dropout_mask(hidden.rows(), hidden.cols(), rate, rng)?;
            hidden.hadamard_assign(&m)?;
            Some(m)
        }
        _ => None,
    };
    let logits = spmm(adj, &hidden.matmul(&params.w1)?)?;
    Ok(Forward {
        x_in,
        pre,
        hidden,
        mask,
        logits,
    })
}

fn backward(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    fwd: &Forward<'_>,
    dlogits: &DenseMatrix,
    weight_decay: f64,
) -> Result<GcnParams> {
    // Â is symmetric, so Âᵀ·G = Â·G.
    let dt = spmm(adj, dlogits)?;
    let dw1 = fwd.hidden.t_matmul(&dt)?;
    let mut dh = dt.matmul_t(&params.w1)?;
    if let Some(m) = &fwd.mask {
        dh.hadamard_assign(m)?;
    }
    relu_backward(&mut dh, &fwd.pre);
    let dxw = spmm(adj, &dh)?;
    let mut dw0 = fwd.x_in.t_matmul(&dxw)?;
    dw0.add_scaled(&params.w0, weight_decay)?;
    Ok(GcnParams { w0: dw0, w1: dw1 })
}

/// Logits of the network. With `dropout` set, inputs of both layers are
/// dropped (inverted scaling); without it the pass is deterministic.
pub fn gcn_forward(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    dropout: Option<(f64, &mut SeededRng)>,
) -> Result<DenseMatrix> {
    Ok(forward(params, adj, x, dropout)?.logits)
}

/// Cross-entropy over `mask` plus `weight_decay / 2 · ‖W0‖²`, with its
/// gradient. Dropout is off.
pub fn loss_and_grad(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    labels: &[usize],
    mask: &[usize],
    weight_decay: f64,
) -> Result<(f64, GcnParams)> {
    let fwd = forward(params, adj, x, None)?;
    let (xent, dlogits) = softmax_xent(&fwd.logits, labels, mask)?;
    let loss = xent + 0.5 * weight_decay * params.w0.sum_squares();
    Ok((loss, backward(params, adj, &fwd, &dlogits, weight_decay)?))
}

#[derive(Clone, Debug)]
pub struct GcnTraining {
    /// Parameters at the epoch with the lowest validation loss.
    pub params: GcnParams,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

pub fn train_gcn(
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    labels: &LabelInfo,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<GcnTraining> {
    cfg.validate()?;
    if labels.train_idx.is_empty() {
        return Err(Error::InvalidArgument("no training labels".into()));
    }
    let mut params = GcnParams::init(x.dim(), cfg.hidden, labels.num_classes, rng);
    params.check(adj, x)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &[params.w0.shape(), params.w1.shape()],
    );
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut since_best = 0;
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let fwd = forward(&params, adj, x, Some((cfg.dropout, rng)))?;
        let (xent, dlogits) = softmax_xent(&fwd.logits, &labels.labels, &labels.train_idx)?;
        let loss = xent + 0.5 * cfg.weight_decay * params.w0.sum_squares();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "gcn training loss at epoch {epoch}"
            )));
        }
        let grads = backward(&params, adj, &fwd, &dlogits, cfg.weight_decay)?;
        drop(fwd);
        adam_step(
            &mut [&mut params.w0, &mut params.w1],
            &[&grads.w0, &grads.w1],
            &mut adam,
        )?;
        train_loss.push(loss);

        if labels.val_idx.is_empty() {
            best = (loss, params.clone(), epoch);
            continue;
        }
        let logits = gcn_forward(&params, adj, x, None)?;
        let (val, _) = softmax_xent(&logits, &labels.labels, &labels.val_idx)?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!(
                "gcn validation loss at epoch {epoch}"
            )));
        }
        val_loss.push(val);
        if val < best.0 {
            best = (val, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(GcnTraining {
        params: best.1,
        train_loss,
        val_loss,
        best_epoch: best.2,
    })
}

/// Argmax of the deterministic forward pass; ties go to the lowest class id.
pub fn predict_labels(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
) -> Result<Vec<usize>> {
    Ok(gcn_forward(params, adj, x, None)?.row_argmax())
}

/// Mean of `samples` row-softmax outputs from forward passes with dropout
/// kept active.
pub fn mc_dropout_predict(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    samples: usize,
    dropout: f64,
    rng: &mut SeededRng,
) -> Result<DenseMatrix> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one MC sample".into()));
    }
    let mut acc = DenseMatrix::zeros(x.num_nodes(), params.w1.cols());
    for _ in 0..samples {
        let logits = gcn_forward(params, adj, x, Some((dropout, rng)))?;
        acc.add_scaled(&row_softmax(&logits), 1.0)?;
    }
    acc.scale(1.0 / samples as f64);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, SparseGraph};
    use crate::nn::grad_check;

    fn random_instance(n: usize, d: usize, seed: u64) -> (NormalizedAdjacency, NodeFeatures) {
        let mut rng = SeededRng::new(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.uniform() < 0.4 {
                    edges.push((i, j, 0.5 + rng.uniform()));
                }
            }
        }
        let g = SparseGraph::from_edges(n, edges).unwrap();
        let x = DenseMatrix::from_fn(n, d, |_, _| {
            if rng.uniform() < 0.5 {
                rng.uniform()
            } else {
                0.0
            }
        });
        (
            normalize_adjacency(&g),
            NodeFeatures::from_dense(&x).unwrap(),
        )
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let (adj, x) = random_instance(4, 3, 1);
        let p = GcnParams {
            w0: DenseMatrix::zeros(3, 5),
            w1: DenseMatrix::zeros(5, 2),
        };
        let l = gcn_forward(&p, &adj, &x, None).unwrap();
        assert!(l.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_node_hand_case() {
        let adj = normalize_adjacency(&SparseGraph::empty(1));
        let x = NodeFeatures::from_triplets(1, 1, [(0, 0, 1.0)]).unwrap();
        let p = GcnParams {
            w0: DenseMatrix::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap(),
            w1: DenseMatrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 3.0]).unwrap(),
        };
        // relu((1, -2, 0.5)) = (1, 0, 0.5); times W1 = (1 + 1, 0 + 1.5)
        let l = gcn_forward(&p, &adj, &x, None).unwrap();
        assert_eq!(l.as_slice(), &[2.0, 1.5]);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (adj, x) = random_instance(6, 4, 100 + seed);
            let mut rng = SeededRng::new(seed);
            let p = GcnParams::init(4, 5, 3, &mut rng);
            let labels = [0, 1, 2, 0, 1, 2];
            let mask = [0, 2, 3, 5];
            let err = grad_check(
                |flat| {
                    let q = p.with_flat(flat).unwrap();
                    let (l, g) = loss_and_grad(&q, &adj, &x, &labels, &mask, 5e-4).unwrap();
                    (l, g.to_flat())
                },
                &p.to_flat(),
            )
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn two_node_toy_is_learned() {
        let adj = normalize_adjacency(&SparseGraph::empty(2));
        let x = NodeFeatures::from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let labels = LabelInfo::new(vec![0, 1], 2, vec![0, 1], vec![], vec![]).unwrap();
        let cfg = TrainConfig {
            dropout: 0.0,
            ..Default::default()
        };
        let t = train_gcn(&adj, &x, &labels, &cfg, &mut SeededRng::new(3)).unwrap();
        assert_eq!(predict_labels(&t.params, &adj, &x).unwrap(), vec![0, 1]);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (adj, x) = random_instance(8, 4, 9);
        let labels = LabelInfo::new(
            vec![0, 1, 0, 1, 0, 1, 0, 1],
            2,
            vec![0, 1],
            vec![2, 3],
            vec![4],
        )
        .unwrap();
        let cfg = TrainConfig::default();
        let a = train_gcn(&adj, &x, &labels, &cfg, &mut SeededRng::new(5)).unwrap();
        let b = train_gcn(&adj, &x, &labels, &cfg, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a.val_loss, b.val_loss);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn mc_without_dropout_equals_softmax() {
        let (adj, x) = random_instance(5, 3, 2);
        let p = GcnParams::init(3, 4, 2, &mut SeededRng::new(1));
        let det = row_softmax(&gcn_forward(&p, &adj, &x, None).unwrap());
        let mc1 = mc_dropout_predict(&p, &adj, &x, 1, 0.0, &mut SeededRng::new(2)).unwrap();
        let mc7 = mc_dropout_predict(&p, &adj, &x, 7, 0.0, &mut SeededRng::new(2)).unwrap();
        assert!(mc1.max_abs_diff(&det) < 1e-15);
        assert!(mc7.max_abs_diff(&det) < 1e-15);
        assert!(mc_dropout_predict(&p, &adj, &x, 0, 0.5, &mut SeededRng::new(2)).is_err());
    }

    #[test]
    fn mc_rows_are_stochastic() {
        let (adj, x) = random_instance(6, 3, 4);
        let p = GcnParams::init(3, 4, 3, &mut SeededRng::new(1));
        let probs = mc_dropout_predict(&p, &adj, &x, 13, 0.5, &mut SeededRng::new(8)).unwrap();
        for i in 0..6 {
            assert!((probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn params_binary_roundtrip() {
        let p = GcnParams::init(3, 4, 2, &mut SeededRng::new(1));
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(br#"{"shapes":[[3,4],[4,2]]}"#));
        assert_eq!(GcnParams::read_from(&buf[..]).unwrap(), p);
        assert!(GcnParams::read_from(&buf[..buf.len() - 1]).is_err());
    }
}
