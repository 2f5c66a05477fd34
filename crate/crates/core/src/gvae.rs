//! Graph variational auto-encoder used to embed nodes.
//!
//! Encoder: `H = relu(Â·X·W0)`, `μ = Â·H·Wμ`, `log σ = Â·H·Wσ`; decoder:
//! `sigmoid(z·zᵀ)` against the adjacency with self-loops. Embeddings are the
//! posterior means `μ`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeFeatures, NormalizedAdjacency, SparseGraph};
use crate::nn::{
    adam_step, dot, glorot_init, relu, relu_backward, spmm, AdamConfig, AdamState, DenseMatrix,
    SeededRng,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GvaeConfig {
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Above this node count the reconstruction term is estimated from all
    /// positive entries plus an equal number of sampled negatives.
    pub dense_max_nodes: usize,
}

impl Default for GvaeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            latent: 16,
            epochs: 200,
            lr: 0.01,
            dense_max_nodes: 5000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GvaeParams {
    pub w0: DenseMatrix,
    pub w_mu: DenseMatrix,
    pub w_logstd: DenseMatrix,
}

impl GvaeParams {
    pub fn init(dim: usize, hidden: usize, latent: usize, rng: &mut SeededRng) -> Self {
        Self {
            w0: glorot_init(dim, hidden, rng),
            w_mu: glorot_init(hidden, latent, rng),
            w_logstd: glorot_init(hidden, latent, rng),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [
            self.w0.as_slice(),
            self.w_mu.as_slice(),
            self.w_logstd.as_slice(),
        ]
        .concat()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        let sizes = [self.w0.as_slice().len(), self.w_mu.as_slice().len()];
        if flat.len() != sizes[0] + 2 * sizes[1] {
            return Err(Error::Shape(format!("{} flat gvae params", flat.len())));
        }
        let (a, rest) = flat.split_at(sizes[0]);
        let (b, c) = rest.split_at(sizes[1]);
        Ok(Self {
            w0: DenseMatrix::from_vec(self.w0.rows(), self.w0.cols(), a.to_vec())?,
            w_mu: DenseMatrix::from_vec(self.w_mu.rows(), self.w_mu.cols(), b.to_vec())?,
            w_logstd: DenseMatrix::from_vec(
                self.w_logstd.rows(),
                self.w_logstd.cols(),
                c.to_vec(),
            )?,
        })
    }

    fn check(&self, adj: &NormalizedAdjacency, x: &NodeFeatures) -> Result<()> {
        let ok = x.num_nodes() == adj.num_nodes()
            && self.w0.rows() == x.dim()
            && self.w_mu.rows() == self.w0.cols()
            && self.w_logstd.shape() == self.w_mu.shape();
        if !ok {
            return Err(Error::Shape(format!(
                "gvae weights {:?}/{:?}/{:?} with features {}x{} on {} nodes",
                self.w0.shape(),
                self.w_mu.shape(),
                self.w_logstd.shape(),
                x.num_nodes(),
                x.dim(),
                adj.num_nodes()
            )));
        }
        Ok(())
    }
}

/// Encoder outputs. `sample = mu + exp(logstd) ∘ ε`, or `mu` without noise.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub mu: DenseMatrix,
    pub logstd: DenseMatrix,
    pub sample: DenseMatrix,
    noise: Option<DenseMatrix>,
    pre: DenseMatrix,
    propagated: DenseMatrix,
}

fn encode_with_noise(
    params: &GvaeParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    noise: Option<DenseMatrix>,
) -> Result<Encoding> {
    params.check(adj, x)?;
    let pre = spmm(adj, &x.matmul(&params.w0)?)?;
    let propagated = spmm(adj, &relu(&pre))?;
    let mu = propagated.matmul(&params.w_mu)?;
    let logstd = propagated.matmul(&params.w_logstd)?;
    let sample = match &noise {
        Some(eps) => {
            if eps.shape() != mu.shape() {
                return Err(Error::Shape(format!(
                    "noise {:?} for latent {:?}",
                    eps.shape(),
                    mu.shape()
                )));
            }
            let mut s = logstd.map(f64::exp);
            s.hadamard_assign(eps)?;
            s.add_scaled(&mu, 1.0)?;
            s
        }
        None => mu.clone(),
    };
    Ok(Encoding {
        mu,
        logstd,
        sample,
        noise,
        pre,
        propagated,
    })
}

pub fn gvae_encode(
    params: &GvaeParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    rng: Option<&mut SeededRng>,
) -> Result<Encoding> {
    let noise = rng.map(|r| {
        DenseMatrix::from_fn(adj.num_nodes(), params.w_mu.cols(), |_, _| {
            r.standard_normal()
        })
    });
    encode_with_noise(params, adj, x, noise)
}

/// Deterministic embeddings: the posterior means.
pub fn node_embeddings(
    params: &GvaeParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
) -> Result<DenseMatrix> {
    Ok(encode_with_noise(params, adj, x, None)?.mu)
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(pos_weight, norm)` of the weighted reconstruction loss.
fn recon_weights(target: &SparseGraph) -> Result<(f64, f64)> {
    let n = target.num_nodes() as f64;
    let total = n * n;
    let positives = (target.nnz() + target.num_nodes()) as f64;
    if target.num_nodes() == 0 || positives >= total {
        return Err(Error::InvalidArgument(
            "reconstruction target needs both positive and negative entries".into(),
        ));
    }
    Ok((
        (total - positives) / positives,
        total / (2.0 * (total - positives)),
    ))
}

/// Weighted BCE over all `N²` entries and its gradient with respect to `z`.
fn recon_dense(z: &DenseMatrix, target: &SparseGraph) -> Result<(f64, DenseMatrix)> {
    let n = z.rows();
    if target.num_nodes() != n {
        return Err(Error::Shape(format!(
            "target has {} nodes, latent has {n} rows",
            target.num_nodes()
        )));
    }
    let (pos_weight, norm) = recon_weights(target)?;
    let scale = norm / (n as f64 * n as f64);
    let k = z.cols();
    let mut grad = DenseMatrix::zeros(n, k);
    let row_losses: Vec<f64> = grad
        .as_mut_slice()
        .par_chunks_mut(k.max(1))
        .enumerate()
        .map(|(i, dz)| {
            let zi = z.row(i);
            let nb = target.neighbors(i);
            let mut next = 0;
            let mut loss = 0.0;
            for j in 0..n {
                let positive = if i == j {
                    true
                } else if next < nb.len() && nb[next] == j {
                    next += 1;
                    true
                } else {
                    false
                };
                let x = dot(zi, z.row(j));
                let g = if positive {
                    loss += pos_weight * softplus(-x);
                    pos_weight * (sigmoid(x) - 1.0)
                } else {
                    loss += softplus(x);
                    sigmoid(x)
                };
                // logits are symmetric: d/dz_i = Σ_j (g_ij + g_ji) z_j = 2 Σ_j g_ij z_j
                let c = 2.0 * scale * g;
                for (d, &v) in dz.iter_mut().zip(z.row(j)) {
                    *d += c * v;
                }
            }
            loss
        })
        .collect();
    Ok((scale * row_losses.iter().sum::<f64>(), grad))
}

/// Balanced BCE over every positive entry and an equal number of sampled
/// negative entries; an unbiased estimate of the dense loss.
fn recon_sampled(
    z: &DenseMatrix,
    target: &SparseGraph,
    rng: &mut SeededRng,
) -> Result<(f64, DenseMatrix)> {
    let n = z.rows();
    recon_weights(target)?;
    let mut positives: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for i in 0..n {
        positives.extend(target.neighbors(i).iter().map(|&j| (i, j)));
    }
    let mut negatives = Vec::with_capacity(positives.len());
    while negatives.len() < positives.len() {
        let (i, j) = (rng.index(n), rng.index(n));
        if i != j && target.neighbors(i).binary_search(&j).is_err() {
            negatives.push((i, j));
        }
    }
    let scale = 0.5 / positives.len() as f64;
    let mut grad = DenseMatrix::zeros(n, z.cols());
    let mut loss = 0.0;
    for (pairs, positive) in [(&positives, true), (&negatives, false)] {
        for &(i, j) in pairs.iter() {
            let x = dot(z.row(i), z.row(j));
            let g = if positive {
                loss += softplus(-x);
                sigmoid(x) - 1.0
            } else {
                loss += softplus(x);
                sigmoid(x)
            };
            let c = scale * g;
            for t in 0..z.cols() {
                let (zi, zj) = (z.get(i, t), z.get(j, t));
                grad.row_mut(i)[t] += c * zj;
                grad.row_mut(j)[t] += c * zi;
            }
        }
    }
    Ok((scale * loss, grad))
}

/// `KL(q ‖ N(0, I)) / N` summed over nodes and latent dimensions.
pub fn kl_term(mu: &DenseMatrix, logstd: &DenseMatrix) -> f64 {
    let n = mu.rows().max(1) as f64;
    mu.as_slice()
        .iter()
        .zip(logstd.as_slice())
        .map(|(&m, &l)| 0.5 * (m * m + (2.0 * l).exp() - 1.0 - 2.0 * l))
        .sum::<f64>()
        / n
}

/// Negative ELBO with the dense reconstruction term: weighted binary
/// cross-entropy between `sigmoid(sample·sampleᵀ)` and `target + I`,
/// positives weighted by `(N² − E⁺)/E⁺` and the mean scaled by
/// `N² / (2(N² − E⁺))`, plus [`kl_term`].
pub fn gvae_loss(
    mu: &DenseMatrix,
    logstd: &DenseMatrix,
    sample: &DenseMatrix,
    target: &SparseGraph,
) -> Result<f64> {
    Ok(recon_dense(sample, target)?.0 + kl_term(mu, logstd))
}

fn backward(
    params: &GvaeParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    enc: &Encoding,
    dz: &DenseMatrix,
) -> Result<GvaeParams> {
    let n = enc.mu.rows().max(1) as f64;
    let mut dmu = dz.clone();
    dmu.add_scaled(&enc.mu, 1.0 / n)?;
    let sigma = enc.logstd.map(f64::exp);
    let mut dlogstd = match &enc.noise {
        Some(eps) => {
            let mut d = dz.clone();
            d.hadamard_assign(&sigma)?;
            d.hadamard_assign(eps)?;
            d
        }
        None => DenseMatrix::zeros(dz.rows(), dz.cols()),
    };
    dlogstd.add_scaled(&sigma.map(|s| (s * s - 1.0) / n), 1.0)?;

    let dw_mu = enc.propagated.t_matmul(&dmu)?;
    let dw_logstd = enc.propagated.t_matmul(&dlogstd)?;
    let mut dprop = dmu.matmul_t(&params.w_mu)?;
    dprop.add_scaled(&dlogstd.matmul_t(&params.w_logstd)?, 1.0)?;
    let mut dhidden = spmm(adj, &dprop)?;
    relu_backward(&mut dhidden, &enc.pre);
    let dw0 = x.t_matmul(&spmm(adj, &dhidden)?)?;
    Ok(GvaeParams {
        w0: dw0,
        w_mu: dw_mu,
        w_logstd: dw_logstd,
    })
}

/// Dense negative ELBO and its parameter gradient for fixed noise `eps`
/// (`None` means `sample = mu`).
pub fn loss_and_grad(
    params: &GvaeParams,
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    target: &SparseGraph,
    eps: Option<&DenseMatrix>,
) -> Result<(f64, GvaeParams)> {
    let enc = encode_with_noise(params, adj, x, eps.cloned())?;
    let (recon, dz) = recon_dense(&enc.sample, target)?;
    let loss = recon + kl_term(&enc.mu, &enc.logstd);
    Ok((loss, backward(params, adj, x, &enc, &dz)?))
}

#[derive(Clone, Debug)]
pub struct GvaeTraining {
    pub params: GvaeParams,
    /// Loss of each epoch, evaluated before that epoch's update.
    pub loss_trace: Vec<f64>,
}

pub fn train_gvae(
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    target: &SparseGraph,
    cfg: &GvaeConfig,
    rng: &mut SeededRng,
) -> Result<GvaeTraining> {
    if cfg.hidden == 0 || cfg.latent == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(
            "gvae hidden, latent and lr must be positive".into(),
        ));
    }
    let mut params = GvaeParams::init(x.dim(), cfg.hidden, cfg.latent, rng);
    params.check(adj, x)?;
    let dense = target.num_nodes() <= cfg.dense_max_nodes;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &[
            params.w0.shape(),
            params.w_mu.shape(),
            params.w_logstd.shape(),
        ],
    );
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let enc = gvae_encode(&params, adj, x, Some(rng))?;
        let (recon, dz) = if dense {
            recon_dense(&enc.sample, target)?
        } else {
            recon_sampled(&enc.sample, target, rng)?
        };
        let loss = recon + kl_term(&enc.mu, &enc.logstd);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("gvae loss at epoch {epoch}")));
        }
        loss_trace.push(loss);
        let g = backward(&params, adj, x, &enc, &dz)?;
        adam_step(
            &mut [&mut params.w0, &mut params.w_mu, &mut params.w_logstd],
            &[&g.w0, &g.w_mu, &g.w_logstd],
            &mut adam,
        )?;
    }
    Ok(GvaeTraining { params, loss_trace })
}

/// `node<TAB>v1<TAB>…<TAB>vk`, one line per node.
pub fn write_embeddings(path: impl AsRef<Path>, emb: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for i in 0..emb.rows() {
        write!(out, "{i}").unwrap();
        for v in emb.row(i) {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let mut fields = line.split('\t');
        let node: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("{}:{}", path.display(), lineno + 1)))?;
        if node != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{}:{}: expected node {}, found {node}",
                path.display(),
                lineno + 1,
                rows.len()
            )));
        }
        let vals: std::result::Result<Vec<f64>, _> = fields.map(str::parse).collect();
        rows.push(vals.map_err(|_| {
            Error::InvalidArgument(format!("{}:{}: bad value", path.display(), lineno + 1))
        })?);
    }
    DenseMatrix::from_rows(&rows)
}
