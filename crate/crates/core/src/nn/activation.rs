use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReluContext {
    shape: Vec<usize>,
    /// True where the input was strictly positive.
    active: Vec<bool>,
}

impl ReluContext {
    pub fn active(&self) -> &[bool] {
        &self.active
    }
}

pub fn relu_forward(x: &Tensor) -> (Tensor, ReluContext) {
    let y = x.map(|v| v.max(0.0));
    let active = x.data().iter().map(|v| *v > 0.0).collect();
    (
        y,
        ReluContext {
            shape: x.shape().to_vec(),
            active,
        },
    )
}

pub fn relu_backward(grad_y: &Tensor, ctx: ReluContext) -> Result<Tensor> {
    if grad_y.shape() != ctx.shape.as_slice() {
        return Err(Error::Contract(format!(
            "relu gradient shape {:?} does not match forward {:?}",
            grad_y.shape(),
            ctx.shape
        )));
    }
    let data = grad_y
        .data()
        .iter()
        .zip(&ctx.active)
        .map(|(g, on)| if *on { *g } else { 0.0 })
        .collect();
    Tensor::from_vec(&ctx.shape, data)
}
