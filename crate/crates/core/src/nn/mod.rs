//! Dense tensors and the layer set of the network, each with a hand-derived backward pass.
//!
//! Every forward returns a context owning what its backward needs; backward
//! consumes it. All arithmetic is `f64` with a fixed summation order, so
//! identical inputs give bitwise-identical outputs.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod pool;
mod tensor;

pub use activation::{relu_backward, relu_forward, ReluContext};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, batchnorm_train, BatchNormContext,
    BatchNormGrads, BatchNormParams, DEFAULT_EPSILON, DEFAULT_STAT_MOMENTUM,
};
pub use conv::{conv3d_backward, conv3d_backward_input, conv3d_forward, Conv3dParams, ConvContext, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseContext, DenseGrads, DenseParams};
pub use pool::{maxpool3d_backward, maxpool3d_forward, PoolContext};
pub use tensor::Tensor;

use crate::error::Result;

/// Whether batch norm uses batch statistics (and updates running ones) or running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Row-wise softmax of `(N, C)` logits, max-subtracted.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let [n, c] = logits.dims2()?;
    let mut out = Tensor::zeros(&[n, c]);
    for s in 0..n {
        let row = &logits.data()[s * c..(s + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (o, e) in out.data_mut()[s * c..(s + 1) * c].iter_mut().zip(&exps) {
            *o = e / total;
        }
    }
    Ok(out)
}
