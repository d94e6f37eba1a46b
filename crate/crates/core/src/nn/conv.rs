use super::Tensor;
use crate::error::{Error, Result};

/// 3D convolution (cross-correlation, no kernel flip) with symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3dParams {
    /// `(C_out, C_in, k_d, k_h, k_w)`
    pub weight: Tensor,
    /// `(C_out)`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvContext {
    input: Tensor,
    out_dims: [usize; 5],
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv3dParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self> {
        let p = Conv3dParams {
            weight,
            bias,
            stride,
            padding,
        };
        p.kernel()?;
        Ok(p)
    }

    /// `(C_out, C_in, [k_d, k_h, k_w])`, validated.
    fn kernel(&self) -> Result<(usize, usize, [usize; 3])> {
        let [co, ci, kd, kh, kw] = self.weight.dims5()?;
        if self.bias.shape() != [co] {
            return Err(Error::Shape(format!(
                "conv bias shape {:?} does not match {co} output channels",
                self.bias.shape()
            )));
        }
        if self.stride == 0 {
            return Err(Error::Shape("conv stride must be >= 1".into()));
        }
        Ok((co, ci, [kd, kh, kw]))
    }

    pub fn output_dims(&self, input: [usize; 5]) -> Result<[usize; 5]> {
        let (co, ci, k) = self.kernel()?;
        let [n, c, d, h, w] = input;
        if c != ci {
            return Err(Error::Shape(format!(
                "input has {c} channels, kernel expects {ci}"
            )));
        }
        let mut out = [n, co, 0, 0, 0];
        for (a, extent) in [d, h, w].into_iter().enumerate() {
            let padded = extent + 2 * self.padding;
            if padded < k[a] {
                return Err(Error::Shape(format!(
                    "padded extent {padded} smaller than kernel {}",
                    k[a]
                )));
            }
            out[2 + a] = (padded - k[a]) / self.stride + 1;
        }
        Ok(out)
    }
}

/// Output positions `o` in `0..out` whose input `o * stride + k - pad` lies in `0..extent`.
#[inline]
fn valid_range(out: usize, extent: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let shift = k as isize - pad as isize;
    let lo = if shift >= 0 {
        0
    } else {
        ((-shift) as usize).div_ceil(stride)
    };
    let top = extent as isize - 1 - shift;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / stride + 1).min(out);
    (lo.min(hi), hi)
}

/// Column block width of the blocked matrix products.
const BLOCK: usize = 256;
const DOT_BLOCK: usize = 1024;

/// Unfolded view of one sample: row `k = ((ci * kd + a) * kh + b) * kw + c`,
/// column = output position; padding cells hold zero.
struct Columns {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

struct Geometry {
    c_in: usize,
    dims: [usize; 3],
    out: [usize; 3],
    k: [usize; 3],
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn new(dims_in: [usize; 5], dims_out: [usize; 5], k: [usize; 3], stride: usize, pad: usize) -> Self {
        Geometry {
            c_in: dims_in[1],
            dims: [dims_in[2], dims_in[3], dims_in[4]],
            out: [dims_out[2], dims_out[3], dims_out[4]],
            k,
            stride,
            pad,
        }
    }

    fn in_len(&self) -> usize {
        self.c_in * self.dims.iter().product::<usize>()
    }

    fn columns(&self) -> Columns {
        let rows = self.c_in * self.k.iter().product::<usize>();
        let cols = self.out.iter().product();
        Columns {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Calls `f(k, col_offset, in_offset, len)` for every contiguous run linking
    /// a column row segment to an input row segment (stride 1), or per element otherwise.
    fn walk(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let [d, h, w] = self.dims;
        let [od_n, oh_n, ow_n] = self.out;
        let (s, p) = (self.stride, self.pad);
        let cols = od_n * oh_n * ow_n;
        let mut k = 0;
        for ci in 0..self.c_in {
            for kd in 0..self.k[0] {
                let (d_lo, d_hi) = valid_range(od_n, d, kd, p, s);
                for kh in 0..self.k[1] {
                    let (h_lo, h_hi) = valid_range(oh_n, h, kh, p, s);
                    for kw in 0..self.k[2] {
                        let (w_lo, w_hi) = valid_range(ow_n, w, kw, p, s);
                        if w_lo < w_hi {
                            for od in d_lo..d_hi {
                                let id = od * s + kd - p;
                                for oh in h_lo..h_hi {
                                    let ih = oh * s + kh - p;
                                    let col = k * cols + (od * oh_n + oh) * ow_n;
                                    let inp = ((ci * d + id) * h + ih) * w;
                                    if s == 1 {
                                        f(k, col + w_lo, inp + w_lo + kw - p, w_hi - w_lo);
                                    } else {
                                        for ow in w_lo..w_hi {
                                            f(k, col + ow, inp + ow * s + kw - p, 1);
                                        }
                                    }
                                }
                            }
                        }
                        k += 1;
                    }
                }
            }
        }
    }

    fn unfold(&self, x: &[f64], cols: &mut Columns) {
        let dst = &mut cols.data;
        self.walk(|_, c, i, len| dst[c..c + len].copy_from_slice(&x[i..i + len]));
    }

    /// Scatter-adds columns back onto the input grid, in row order.
    fn fold(&self, cols: &Columns, gx: &mut [f64]) {
        let src = &cols.data;
        self.walk(|_, c, i, len| {
            for (o, v) in gx[i..i + len].iter_mut().zip(&src[c..c + len]) {
                *o += v;
            }
        });
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in y.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// Adds `a_m . b_r` to `out[m * rows_b + r]` for every row pair, where rows have
/// length `len` and stride `stride`. Each dot product keeps four lane sums
/// (`i mod 4`, `i` ascending) combined as `(l0 + l1) + (l2 + l3)`.
fn add_dots(out: &mut [f64], a: &[f64], rows_a: usize, b: &[f64], rows_b: usize, stride: usize, len: usize) {
    let n4 = len / 4 * 4;
    let finish = |l: [f64; 4], x: &[f64], y: &[f64]| {
        let mut l = l;
        for (i, (p, q)) in x[n4..len].iter().zip(&y[n4..len]).enumerate() {
            l[i] += p * q;
        }
        (l[0] + l[1]) + (l[2] + l[3])
    };
    let mut m = 0;
    while m < rows_a {
        let two_m = m + 1 < rows_a;
        let a0 = &a[m * stride..m * stride + len];
        let a1 = if two_m { &a[(m + 1) * stride..(m + 1) * stride + len] } else { a0 };
        let mut r = 0;
        while r < rows_b {
            let two_r = r + 1 < rows_b;
            let b0 = &b[r * stride..r * stride + len];
            let b1 = if two_r { &b[(r + 1) * stride..(r + 1) * stride + len] } else { b0 };
            let mut l = [[0.0f64; 4]; 4];
            for i in (0..n4).step_by(4) {
                for j in 0..4 {
                    let (x0, x1, y0, y1) = (a0[i + j], a1[i + j], b0[i + j], b1[i + j]);
                    l[0][j] += x0 * y0;
                    l[1][j] += x0 * y1;
                    l[2][j] += x1 * y0;
                    l[3][j] += x1 * y1;
                }
            }
            out[m * rows_b + r] += finish(l[0], a0, b0);
            if two_r {
                out[m * rows_b + r + 1] += finish(l[1], a0, b1);
            }
            if two_m {
                out[(m + 1) * rows_b + r] += finish(l[2], a1, b0);
                if two_r {
                    out[(m + 1) * rows_b + r + 1] += finish(l[3], a1, b1);
                }
            }
            r += 2;
        }
        m += 2;
    }
}

/// Row-major matrix view: element `(m, k)` at `base + m * sm + k * sk`.
#[derive(Clone, Copy)]
struct Strided<'a> {
    data: &'a [f64],
    base: usize,
    sm: usize,
    sk: usize,
}

impl Strided<'_> {
    #[inline]
    fn at(&self, m: usize, k: usize) -> f64 {
        self.data[self.base + m * self.sm + k * self.sk]
    }
}

/// `out[m * out_stride + i] += sum_k coef(m, k) * src[k * src_stride + i]` for
/// `m < rows`, `i < len`, adding the terms of each element in ascending `k`.
#[allow(clippy::too_many_arguments)]
fn block_product(
    out: &mut [f64],
    out_stride: usize,
    rows: usize,
    len: usize,
    coef: Strided,
    src: &[f64],
    src_stride: usize,
    kk: usize,
) {
    let mut m0 = 0;
    while m0 < rows {
        let mb = (rows - m0).min(4);
        let mut k0 = 0;
        while k0 < kk {
            let kb = (kk - k0).min(4);
            if mb == 4 && kb == 4 {
                let w: [[f64; 4]; 4] = std::array::from_fn(|m| std::array::from_fn(|k| coef.at(m0 + m, k0 + k)));
                let x: [&[f64]; 4] = std::array::from_fn(|k| &src[(k0 + k) * src_stride..(k0 + k) * src_stride + len]);
                let block = &mut out[m0 * out_stride..];
                let (a0, rest) = block.split_at_mut(out_stride);
                let (a1, rest) = rest.split_at_mut(out_stride);
                let (a2, a3) = rest.split_at_mut(out_stride);
                let (a0, a1, a2, a3) = (&mut a0[..len], &mut a1[..len], &mut a2[..len], &mut a3[..len]);
                for i in 0..len {
                    let (x0, x1, x2, x3) = (x[0][i], x[1][i], x[2][i], x[3][i]);
                    a0[i] = a0[i] + w[0][0] * x0 + w[0][1] * x1 + w[0][2] * x2 + w[0][3] * x3;
                    a1[i] = a1[i] + w[1][0] * x0 + w[1][1] * x1 + w[1][2] * x2 + w[1][3] * x3;
                    a2[i] = a2[i] + w[2][0] * x0 + w[2][1] * x1 + w[2][2] * x2 + w[2][3] * x3;
                    a3[i] = a3[i] + w[3][0] * x0 + w[3][1] * x1 + w[3][2] * x2 + w[3][3] * x3;
                }
            } else {
                for m in m0..m0 + mb {
                    for k in k0..k0 + kb {
                        let row = &mut out[m * out_stride..m * out_stride + len];
                        axpy(row, coef.at(m, k), &src[k * src_stride..k * src_stride + len]);
                    }
                }
            }
            k0 += kb;
        }
        m0 += mb;
    }
}

pub fn conv3d_forward(x: &Tensor, p: &Conv3dParams) -> Result<(Tensor, ConvContext)> {
    let dims_in = x.dims5()?;
    let dims_out = p.output_dims(dims_in)?;
    let (c_out, _, k) = p.kernel()?;
    let geo = Geometry::new(dims_in, dims_out, k, p.stride, p.padding);
    let mut cols = geo.columns();
    let (kk, s_len) = (cols.rows, cols.cols);

    let mut y = Tensor::zeros(&dims_out);
    let wd = p.weight.data();
    let bias = p.bias.data();
    for (n, yn) in y.data_mut().chunks_exact_mut(c_out * s_len).enumerate() {
        geo.unfold(&x.data()[n * geo.in_len()..(n + 1) * geo.in_len()], &mut cols);
        for co in 0..c_out {
            yn[co * s_len..(co + 1) * s_len].fill(bias[co]);
        }
        let coef = Strided { data: wd, base: 0, sm: kk, sk: 1 };
        for s0 in (0..s_len).step_by(BLOCK) {
            let len = (s_len - s0).min(BLOCK);
            block_product(&mut yn[s0..], s_len, c_out, len, coef, &cols.data[s0..], s_len, kk);
        }
    }
    Ok((
        y,
        ConvContext {
            input: x.clone(),
            out_dims: dims_out,
        },
    ))
}

fn check_grad(grad_y: &Tensor, ctx: &ConvContext, p: &Conv3dParams) -> Result<()> {
    if grad_y.shape() != ctx.out_dims {
        return Err(Error::Contract(format!(
            "conv gradient shape {:?} does not match forward output {:?}",
            grad_y.shape(),
            ctx.out_dims
        )));
    }
    if p.output_dims(ctx.input.dims5()?)? != ctx.out_dims {
        return Err(Error::Contract("conv parameters changed since forward".into()));
    }
    Ok(())
}

fn grads(grad_y: &Tensor, ctx: &ConvContext, p: &Conv3dParams, want_params: bool) -> Result<(Tensor, Option<(Tensor, Tensor)>)> {
    check_grad(grad_y, ctx, p)?;
    let dims_in = ctx.input.dims5()?;
    let (c_out, _, k) = p.kernel()?;
    let geo = Geometry::new(dims_in, ctx.out_dims, k, p.stride, p.padding);
    let mut cols = geo.columns();
    let mut gcols = geo.columns();
    let (kk, s_len) = (cols.rows, cols.cols);
    let in_len = geo.in_len();
    let wd = p.weight.data();

    let mut gx = Tensor::zeros(&dims_in);
    let mut gw = Tensor::zeros(p.weight.shape());
    let mut gb = Tensor::zeros(&[c_out]);
    for (n, gyn) in grad_y.data().chunks_exact(c_out * s_len).enumerate() {
        if want_params {
            // per weight: samples in order, then position blocks in order
            geo.unfold(&ctx.input.data()[n * in_len..(n + 1) * in_len], &mut cols);
            for s0 in (0..s_len).step_by(DOT_BLOCK) {
                let len = (s_len - s0).min(DOT_BLOCK);
                add_dots(gw.data_mut(), &gyn[s0..], c_out, &cols.data[s0..], kk, s_len, len);
            }
            for co in 0..c_out {
                gb.data_mut()[co] += gyn[co * s_len..(co + 1) * s_len].iter().sum::<f64>();
            }
        }
        // column gradient: each entry adds output channels in ascending order
        gcols.data.fill(0.0);
        let coef = Strided { data: wd, base: 0, sm: 1, sk: kk };
        for s0 in (0..s_len).step_by(BLOCK) {
            let len = (s_len - s0).min(BLOCK);
            block_product(&mut gcols.data[s0..], s_len, kk, len, coef, &gyn[s0..], s_len, c_out);
        }
        geo.fold(&gcols, &mut gx.data_mut()[n * in_len..(n + 1) * in_len]);
    }
    Ok((gx, want_params.then_some((gw, gb))))
}

/// Gradient with respect to the input only.
pub fn conv3d_backward_input(grad_y: &Tensor, ctx: &ConvContext, p: &Conv3dParams) -> Result<Tensor> {
    Ok(grads(grad_y, ctx, p, false)?.0)
}

/// Exact adjoints of [`conv3d_forward`] with respect to input, weight and bias.
pub fn conv3d_backward(grad_y: &Tensor, ctx: ConvContext, p: &Conv3dParams) -> Result<ConvGrads> {
    let (input, params) = grads(grad_y, &ctx, p, true)?;
    let (weight, bias) = params.expect("requested");
    Ok(ConvGrads { input, weight, bias })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(weight: Tensor, bias: Vec<f64>) -> Conv3dParams {
        let co = weight.shape()[0];
        Conv3dParams::new(weight, Tensor::from_vec(&[co], bias).unwrap(), 1, 0).unwrap()
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let x = Tensor::full(&[2, 3, 4, 4, 4], 1.7);
        let mut p = params(Tensor::zeros(&[2, 3, 3, 3, 3]), vec![0.7, 0.7]);
        p.padding = 1;
        let (y, _) = conv3d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[2, 2, 4, 4, 4]);
        assert!(y.data().iter().all(|v| *v == 0.7));
    }

    #[test]
    fn identity_kernel() {
        let data: Vec<f64> = (0..27).map(|v| v as f64 * 0.5 - 3.0).collect();
        let x = Tensor::from_vec(&[1, 1, 3, 3, 3], data).unwrap();
        let p = params(Tensor::full(&[1, 1, 1, 1, 1], 1.0), vec![0.0]);
        let (y, ctx) = conv3d_forward(&x, &p).unwrap();
        assert_eq!(y, x);
        let gy = x.map(|v| v * 2.0);
        let g = conv3d_backward(&gy, ctx, &p).unwrap();
        assert_eq!(g.input, gy);
    }

    #[test]
    fn zero_grad_gives_zero_grads() {
        let x = Tensor::full(&[1, 2, 3, 3, 3], 0.3);
        let p = params(Tensor::full(&[2, 2, 2, 2, 2], 0.1), vec![0.0, 1.0]);
        let (y, ctx) = conv3d_forward(&x, &p).unwrap();
        let g = conv3d_backward(&Tensor::zeros(y.shape()), ctx, &p).unwrap();
        assert!(g.input.data().iter().chain(g.weight.data()).chain(g.bias.data()).all(|v| *v == 0.0));
    }

    #[test]
    fn padded_batch_weight_grad_is_sum_of_samples() {
        let a: Vec<f64> = (0..27).map(|v| (v as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..27).map(|v| (v as f64 * 0.91).cos()).collect();
        let mut p = params(Tensor::full(&[1, 1, 3, 3, 3], 0.2), vec![0.1]);
        p.padding = 1;
        let weight_grad = |data: Vec<f64>, n: usize| {
            let x = Tensor::from_vec(&[n, 1, 3, 3, 3], data).unwrap();
            let (y, ctx) = conv3d_forward(&x, &p).unwrap();
            let gy = y.map(|v| v - 0.5);
            conv3d_backward(&gy, ctx, &p).unwrap().weight
        };
        let both = weight_grad([a.clone(), b.clone()].concat(), 2);
        let (ga, gb) = (weight_grad(a, 1), weight_grad(b, 1));
        for ((w, x), y) in both.data().iter().zip(ga.data()).zip(gb.data()) {
            assert!((w - (x + y)).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::zeros(&[1, 2, 3, 3, 3]);
        let p = params(Tensor::zeros(&[1, 1, 2, 2, 2]), vec![0.0]);
        assert!(matches!(conv3d_forward(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn grad_shape_mismatch_is_contract_error() {
        let x = Tensor::zeros(&[1, 1, 3, 3, 3]);
        let p = params(Tensor::zeros(&[1, 1, 2, 2, 2]), vec![0.0]);
        let (_, ctx) = conv3d_forward(&x, &p).unwrap();
        let bad = Tensor::zeros(&[1, 1, 3, 3, 3]);
        assert!(matches!(conv3d_backward(&bad, ctx, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn strided_output_dims() {
        let p = Conv3dParams::new(Tensor::zeros(&[4, 2, 3, 3, 3]), Tensor::zeros(&[4]), 2, 1).unwrap();
        assert_eq!(p.output_dims([1, 2, 7, 8, 9]).unwrap(), [1, 4, 4, 4, 5]);
    }
}
