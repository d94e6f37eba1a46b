use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PoolContext {
    in_shape: [usize; 5],
    /// Linear input index selected by each output element.
    argmax: Vec<usize>,
}

impl PoolContext {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Max pooling; ties go to the lowest linear input index.
pub fn maxpool3d_forward(x: &Tensor, window: [usize; 3], stride: usize) -> Result<(Tensor, PoolContext)> {
    let [n, c, d, h, w] = x.dims5()?;
    if stride == 0 || window.iter().any(|v| *v == 0) {
        return Err(Error::Shape("pool window and stride must be >= 1".into()));
    }
    let extent = [d, h, w];
    for a in 0..3 {
        if window[a] > extent[a] {
            return Err(Error::Shape(format!(
                "pool window {window:?} exceeds spatial extent {extent:?}"
            )));
        }
    }
    let out: [usize; 3] = std::array::from_fn(|a| (extent[a] - window[a]) / stride + 1);
    let mut y = Tensor::zeros(&[n, c, out[0], out[1], out[2]]);
    let mut argmax = Vec::with_capacity(y.len());
    let xd = x.data();
    let yd = y.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * d * h * w;
        for od in 0..out[0] {
            for oh in 0..out[1] {
                for ow in 0..out[2] {
                    let first = base + (od * stride * h + oh * stride) * w + ow * stride;
                    let mut best = xd[first];
                    let mut best_at = first;
                    for p in 0..window[0] {
                        for q in 0..window[1] {
                            let row = base + ((od * stride + p) * h + oh * stride + q) * w + ow * stride;
                            for r in 0..window[2] {
                                let v = xd[row + r];
                                if v > best {
                                    best = v;
                                    best_at = row + r;
                                }
                            }
                        }
                    }
                    yd[o] = best;
                    argmax.push(best_at);
                    o += 1;
                }
            }
        }
    }
    Ok((
        y,
        PoolContext {
            in_shape: [n, c, d, h, w],
            argmax,
        },
    ))
}

/// Routes each output gradient to its window's selected input.
pub fn maxpool3d_backward(grad_y: &Tensor, ctx: PoolContext) -> Result<Tensor> {
    if grad_y.len() != ctx.argmax.len() || grad_y.shape()[..2] != ctx.in_shape[..2] {
        return Err(Error::Contract(format!(
            "pool gradient shape {:?} does not match forward output",
            grad_y.shape()
        )));
    }
    let mut gx = Tensor::zeros(&ctx.in_shape);
    let gxd = gx.data_mut();
    for (g, at) in grad_y.data().iter().zip(&ctx.argmax) {
        gxd[*at] += g;
    }
    Ok(gx)
}
