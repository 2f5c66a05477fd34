//! Deterministic numeric kernels shared by the GCN and the GVAE.

mod adam;
mod dense;
mod gradcheck;
mod ops;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub(crate) use dense::dot;
pub use dense::DenseMatrix;
pub use gradcheck::{grad_check, GRAD_CHECK_EPS};
pub use ops::{dropout_mask, glorot_init, relu, relu_backward, row_softmax, softmax_xent, spmm};
pub use rng::SeededRng;
