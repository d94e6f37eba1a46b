use super::Tensor;
use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `(C_out, C_in)`
    pub weight: Tensor,
    /// `(C_out)`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseContext {
    input: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let p = DenseParams { weight, bias };
        p.dims()?;
        Ok(p)
    }

    /// `(C_out, C_in)`
    pub fn dims(&self) -> Result<(usize, usize)> {
        let [co, ci] = self.weight.dims2()?;
        if self.bias.shape() != [co] {
            return Err(Error::Shape(format!(
                "dense bias shape {:?} does not match {co} outputs",
                self.bias.shape()
            )));
        }
        Ok((co, ci))
    }
}

pub fn dense_forward(x: &Tensor, p: &DenseParams) -> Result<(Tensor, DenseContext)> {
    let [n, c] = x.dims2()?;
    let (co, ci) = p.dims()?;
    if c != ci {
        return Err(Error::Shape(format!("dense layer expects {ci} inputs, got {c}")));
    }
    let w = p.weight.data();
    let mut y = Tensor::zeros(&[n, co]);
    for s in 0..n {
        let row = &x.data()[s * c..(s + 1) * c];
        for o in 0..co {
            let acc: f64 = w[o * c..(o + 1) * c].iter().zip(row).map(|(a, b)| a * b).sum();
            y.data_mut()[s * co + o] = acc + p.bias.data()[o];
        }
    }
    Ok((y, DenseContext { input: x.clone() }))
}

pub fn dense_backward(grad_y: &Tensor, ctx: DenseContext, p: &DenseParams) -> Result<DenseGrads> {
    let [n, c] = ctx.input.dims2()?;
    let (co, _) = p.dims()?;
    if grad_y.shape() != [n, co] {
        return Err(Error::Contract(format!(
            "dense gradient shape {:?} does not match forward output {:?}",
            grad_y.shape(),
            [n, co]
        )));
    }
    let (g, x, w) = (grad_y.data(), ctx.input.data(), p.weight.data());
    let mut gx = Tensor::zeros(&[n, c]);
    let mut gw = Tensor::zeros(&[co, c]);
    let mut gb = Tensor::zeros(&[co]);
    for s in 0..n {
        for o in 0..co {
            let gv = g[s * co + o];
            gb.data_mut()[o] += gv;
            let xrow = &x[s * c..(s + 1) * c];
            for (dst, xv) in gw.data_mut()[o * c..(o + 1) * c].iter_mut().zip(xrow) {
                *dst += gv * xv;
            }
            for (dst, wv) in gx.data_mut()[s * c..(s + 1) * c].iter_mut().zip(&w[o * c..(o + 1) * c]) {
                *dst += gv * wv;
            }
        }
    }
    Ok(DenseGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}
