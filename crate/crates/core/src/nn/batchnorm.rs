use super::{Mode, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_STAT_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization with affine scale/shift.
///
/// Batch variance is the population variance. Running statistics follow
/// `running = (1 - m) * running + m * batch`; the first training batch seeds
/// them directly.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub momentum_stat: f64,
    /// False until a training batch has populated the running statistics.
    pub tracked: bool,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            epsilon: DEFAULT_EPSILON,
            momentum_stat: DEFAULT_STAT_MOMENTUM,
            tracked: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormContext {
    xhat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
}

/// `(N, C, spatial)` view of a tensor of rank >= 2.
fn layout(x: &Tensor, channels: usize) -> Result<(usize, usize)> {
    let shape = x.shape();
    if shape.len() < 2 || shape[1] != channels {
        return Err(Error::Shape(format!(
            "batch norm over {channels} channels got input {shape:?}"
        )));
    }
    Ok((shape[0], shape[2..].iter().product()))
}

/// Visits every element of channel `c` in `(n, spatial)` order.
fn channel_slices(data: &[f64], n: usize, c_total: usize, c: usize, s: usize) -> impl Iterator<Item = &[f64]> {
    (0..n).map(move |b| {
        let start = (b * c_total + c) * s;
        &data[start..start + s]
    })
}

/// Sum of `f(a, b)` over paired slices, with four lane sums (position within
/// a slice mod 4) combined as `(l0 + l1) + (l2 + l3)`.
fn lane_sum<'a>(pairs: impl Iterator<Item = (&'a [f64], &'a [f64])>, f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut l = [0.0f64; 4];
    for (ra, rb) in pairs {
        let n4 = ra.len() / 4 * 4;
        for (ca, cb) in ra[..n4].chunks_exact(4).zip(rb[..n4].chunks_exact(4)) {
            for j in 0..4 {
                l[j] += f(ca[j], cb[j]);
            }
        }
        for (j, (x, y)) in ra[n4..].iter().zip(&rb[n4..]).enumerate() {
            l[j] += f(*x, *y);
        }
    }
    (l[0] + l[1]) + (l[2] + l[3])
}

pub fn batchnorm_forward(x: &Tensor, p: &mut BatchNormParams, mode: Mode) -> Result<(Tensor, BatchNormContext)> {
    match mode {
        Mode::Infer => batchnorm_infer(x, p),
        Mode::Train => batchnorm_train(x, p),
    }
}

pub fn batchnorm_train(x: &Tensor, p: &mut BatchNormParams) -> Result<(Tensor, BatchNormContext)> {
    if !(p.epsilon > 0.0) {
        return Err(Error::Argument(format!("epsilon must be positive, got {}", p.epsilon)));
    }
    let c_total = p.channels();
    let (n, s) = layout(x, c_total)?;
    let count = n * s;
    if count < 2 {
        return Err(Error::Shape(format!(
            "training batch norm needs >= 2 values per channel, got {count}"
        )));
    }
    let mut mean = vec![0.0; c_total];
    let mut var = vec![0.0; c_total];
    for c in 0..c_total {
        let rows = || channel_slices(x.data(), n, c_total, c, s).map(|r| (r, r));
        let mu = lane_sum(rows(), |v, _| v) / count as f64;
        let sq = lane_sum(rows(), |v, _| (v - mu) * (v - mu));
        mean[c] = mu;
        var[c] = sq / count as f64;
    }
    let out = normalize(x, p, &mean, &var, n, s, Mode::Train);

    let m = p.momentum_stat;
    let tracked = p.tracked;
    let blend = |running: &mut f64, batch: f64| {
        *running = if tracked { (1.0 - m) * *running + m * batch } else { batch };
    };
    for c in 0..c_total {
        blend(&mut p.running_mean.data_mut()[c], mean[c]);
        blend(&mut p.running_var.data_mut()[c], var[c]);
    }
    p.tracked = true;
    Ok(out)
}

pub fn batchnorm_infer(x: &Tensor, p: &BatchNormParams) -> Result<(Tensor, BatchNormContext)> {
    if !p.tracked {
        return Err(Error::State(
            "batch norm running statistics are empty; train before inference".into(),
        ));
    }
    let (n, s) = layout(x, p.channels())?;
    Ok(normalize(
        x,
        p,
        p.running_mean.data(),
        p.running_var.data(),
        n,
        s,
        Mode::Infer,
    ))
}

fn normalize(
    x: &Tensor,
    p: &BatchNormParams,
    mean: &[f64],
    var: &[f64],
    n: usize,
    s: usize,
    mode: Mode,
) -> (Tensor, BatchNormContext) {
    let c_total = p.channels();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.epsilon).sqrt()).collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let (g, b) = (p.gamma.data(), p.beta.data());
    for bi in 0..n {
        for c in 0..c_total {
            let start = (bi * c_total + c) * s;
            let src = &x.data()[start..start + s];
            let xh = &mut xhat.data_mut()[start..start + s];
            let dst = &mut y.data_mut()[start..start + s];
            for ((h, o), v) in xh.iter_mut().zip(dst.iter_mut()).zip(src) {
                *h = (v - mean[c]) * inv_std[c];
                *o = g[c] * *h + b[c];
            }
        }
    }
    (y, BatchNormContext { xhat, inv_std, mode })
}

pub fn batchnorm_backward(
    grad_out: &Tensor,
    ctx: BatchNormContext,
    p: &BatchNormParams,
) -> Result<BatchNormGrads> {
    if grad_out.shape() != ctx.xhat.shape() {
        return Err(Error::Contract(format!(
            "batch norm gradient shape {:?} does not match forward output {:?}",
            grad_out.shape(),
            ctx.xhat.shape()
        )));
    }
    let c_total = p.channels();
    if ctx.inv_std.len() != c_total {
        return Err(Error::Contract("batch norm channel count changed since forward".into()));
    }
    let (n, s) = layout(grad_out, c_total)?;
    let count = (n * s) as f64;
    let gd = grad_out.data();
    let xh = ctx.xhat.data();

    let mut g_gamma = Tensor::zeros(&[c_total]);
    let mut g_beta = Tensor::zeros(&[c_total]);
    for c in 0..c_total {
        let sum_g = lane_sum(channel_slices(gd, n, c_total, c, s).map(|r| (r, r)), |v, _| v);
        let paired = channel_slices(gd, n, c_total, c, s).zip(channel_slices(xh, n, c_total, c, s));
        let sum_gx = lane_sum(paired, |g, h| g * h);
        g_beta.data_mut()[c] = sum_g;
        g_gamma.data_mut()[c] = sum_gx;
    }

    let mut gx = Tensor::zeros(grad_out.shape());
    let gamma = p.gamma.data();
    for bi in 0..n {
        for c in 0..c_total {
            let scale = gamma[c] * ctx.inv_std[c];
            let start = (bi * c_total + c) * s;
            let out = &mut gx.data_mut()[start..start + s];
            match ctx.mode {
                Mode::Infer => {
                    for (o, g) in out.iter_mut().zip(&gd[start..start + s]) {
                        *o = scale * g;
                    }
                }
                Mode::Train => {
                    let (sg, sgx) = (g_beta.data()[c], g_gamma.data()[c]);
                    for ((o, g), h) in out.iter_mut().zip(&gd[start..start + s]).zip(&xh[start..start + s]) {
                        *o = scale / count * (count * g - sg - h * sgx);
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: gx,
        gamma: g_gamma,
        beta: g_beta,
    })
}
