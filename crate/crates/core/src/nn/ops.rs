use rayon::prelude::*;

use super::{DenseMatrix, SeededRng};
use crate::error::{Error, Result};
use crate::graph::SparseOperator;

const PAR_MIN_ELEMS: usize = 1 << 15;

/// Sparse-dense product `A · B` for a square CSR operator `A`.
pub fn spmm<A: SparseOperator + Sync + ?Sized>(a: &A, b: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.dim();
    if b.rows() != n {
        return Err(Error::Shape(format!(
            "spmm: operator is {n}x{n}, dense is {:?}",
            b.shape()
        )));
    }
    let cols = b.cols();
    let mut out = DenseMatrix::zeros(n, cols);
    if cols == 0 {
        return Ok(out);
    }
    let row_kernel = |(i, dst): (usize, &mut [f64])| {
        let (idx, vals) = a.row_entries(i);
        for (&j, &w) in idx.iter().zip(vals) {
            for (d, &x) in dst.iter_mut().zip(b.row(j)) {
                *d += w * x;
            }
        }
    };
    if n * cols >= PAR_MIN_ELEMS {
        out.as_mut_slice()
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(row_kernel);
    } else {
        out.as_mut_slice()
            .chunks_mut(cols)
            .enumerate()
            .for_each(row_kernel);
    }
    Ok(out)
}

pub fn relu(m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| v.max(0.0))
}

/// Gradient through `relu(pre)`: zeroes `grad` where `pre <= 0`.
pub fn relu_backward(grad: &mut DenseMatrix, pre: &DenseMatrix) {
    for (g, &p) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Row-wise softmax, stabilized by subtracting the row maximum.
pub fn row_softmax(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean softmax cross-entropy over the rows listed in `mask`, and its
/// gradient with respect to `logits` (zero on unmasked rows).
pub fn softmax_xent(
    logits: &DenseMatrix,
    labels: &[usize],
    mask: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if mask.is_empty() {
        return Err(Error::InvalidArgument(
            "cross-entropy over an empty mask".into(),
        ));
    }
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let scale = 1.0 / mask.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for &i in mask {
        let row = logits.row(i);
        let y = labels[i];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - lse).exp() * scale;
        }
        g[y] -= scale;
    }
    Ok((loss * scale, grad))
}

/// Inverted-dropout mask with entries in `{0, 1/(1-rate)}`.
pub fn dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut SeededRng,
) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if rate == 0.0 {
        return Ok(DenseMatrix::filled(rows, cols, 1.0));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(DenseMatrix::from_fn(rows, cols, |_, _| {
        if rng.uniform() < rate {
            0.0
        } else {
            keep
        }
    }))
}

/// Glorot/Xavier uniform initialization in `±sqrt(6 / (rows + cols))`.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| (2.0 * rng.uniform() - 1.0) * r)
}
