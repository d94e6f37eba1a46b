//! Brute-force reference implementations compared against the library.
#![allow(dead_code)]

use archshape::nn::{conv3d_forward, maxpool3d_forward, Conv3dParams, Tensor};
use archshape::saliency::{normalize, project, rank_bands, slice, Axis, ScalarField, RANK_COUNT};
use archshape::{ValueKind, VoxelGrid};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

#[derive(Debug, Clone, Copy, Default)]
pub struct Outcome {
    pub cases: usize,
    /// Largest absolute deviation seen (0 for exact comparisons that held).
    pub max_abs: f64,
    pub mismatches: usize,
}

impl Outcome {
    pub fn passes(&self, tol: f64) -> bool {
        self.cases > 0 && self.mismatches == 0 && self.max_abs <= tol
    }

    fn diff(&mut self, a: f64, b: f64) {
        let d = (a - b).abs();
        if !(d <= self.max_abs) {
            self.max_abs = if d.is_nan() { f64::INFINITY } else { d };
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct definition: bias, then every (ci, a, b, c) tap in order, padded taps contributing 0.
pub fn conv_oracle(x: &Tensor, p: &Conv3dParams) -> Vec<f64> {
    let s = x.shape();
    let (n, ci, d, h, w) = (s[0], s[1], s[2] as isize, s[3] as isize, s[4] as isize);
    let ws = p.weight.shape();
    let (co, kd, kh, kw) = (ws[0], ws[2], ws[3], ws[4]);
    let (st, pad) = (p.stride as isize, p.padding as isize);
    let od = (d + 2 * pad - kd as isize) / st + 1;
    let oh = (h + 2 * pad - kh as isize) / st + 1;
    let ow = (w + 2 * pad - kw as isize) / st + 1;
    let xv = |b: usize, c: usize, i: isize, j: isize, k: isize| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= d || j >= h || k >= w {
            0.0
        } else {
            x.data()[(((b * ci + c) as isize * d + i) * h + j) as usize * w as usize + k as usize]
        }
    };
    let mut out = Vec::new();
    for b in 0..n {
        for o in 0..co {
            for z in 0..od {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = p.bias.data()[o];
                        for c in 0..ci {
                            for a in 0..kd {
                                for bb in 0..kh {
                                    for cc in 0..kw {
                                        let wv = p.weight.data()[(((o * ci + c) * kd + a) * kh + bb) * kw + cc];
                                        acc += wv
                                            * xv(
                                                b,
                                                c,
                                                z * st + a as isize - pad,
                                                y * st + bb as isize - pad,
                                                xx * st + cc as isize - pad,
                                            );
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
    }
    out
}

pub fn check_conv(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::default();
    for _ in 0..cases {
        let n = rng.gen_range(1..=2);
        let (ci, co) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let k: [usize; 3] = [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3)];
        let stride = rng.gen_range(1..=3);
        let pad: usize = rng.gen_range(0..=2);
        let dims: [usize; 3] = std::array::from_fn(|a| rng.gen_range(k[a].saturating_sub(2 * pad).max(1)..=7));
        let x = uniform(&mut rng, &[n, ci, dims[0], dims[1], dims[2]]);
        let p = Conv3dParams::new(uniform(&mut rng, &[co, ci, k[0], k[1], k[2]]), uniform(&mut rng, &[co]), stride, pad)
            .unwrap();
        let (y, _) = conv3d_forward(&x, &p).unwrap();
        let want = conv_oracle(&x, &p);
        if y.len() != want.len() {
            out.mismatches += 1;
        } else {
            for (a, b) in y.data().iter().zip(&want) {
                out.diff(*a, *b);
            }
        }
        out.cases += 1;
    }
    out
}

/// Every window scanned in full; ties resolved to the first element.
pub fn maxpool_oracle(x: &Tensor, win: [usize; 3], stride: usize) -> (Vec<f64>, Vec<usize>) {
    let s = x.shape();
    let (planes, d, h, w) = (s[0] * s[1], s[2], s[3], s[4]);
    let o = [(d - win[0]) / stride + 1, (h - win[1]) / stride + 1, (w - win[2]) / stride + 1];
    let (mut vals, mut idx) = (Vec::new(), Vec::new());
    for pl in 0..planes {
        for a in 0..o[0] {
            for b in 0..o[1] {
                for c in 0..o[2] {
                    let mut best: Option<(f64, usize)> = None;
                    for i in a * stride..a * stride + win[0] {
                        for j in b * stride..b * stride + win[1] {
                            for k in c * stride..c * stride + win[2] {
                                let flat = ((pl * d + i) * h + j) * w + k;
                                let v = x.data()[flat];
                                if best.is_none_or(|(bv, _)| v > bv) {
                                    best = Some((v, flat));
                                }
                            }
                        }
                    }
                    let (v, f) = best.unwrap();
                    vals.push(v);
                    idx.push(f);
                }
            }
        }
    }
    (vals, idx)
}

pub fn check_maxpool(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::default();
    for t in 0..cases {
        let (n, c) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
        let win = [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3)];
        let stride = rng.gen_range(1..=3);
        let dims: [usize; 3] = std::array::from_fn(|a| rng.gen_range(win[a]..=7));
        let shape = [n, c, dims[0], dims[1], dims[2]];
        // every other case draws from a handful of levels to exercise ties
        let x = if t % 2 == 0 {
            uniform(&mut rng, &shape)
        } else {
            let len = shape.iter().product();
            Tensor::from_vec(&shape, (0..len).map(|_| rng.gen_range(0..3) as f64).collect()).unwrap()
        };
        let (y, ctx) = maxpool3d_forward(&x, win, stride).unwrap();
        let (vals, idx) = maxpool_oracle(&x, win, stride);
        if y.data() != vals.as_slice() || ctx.argmax() != idx.as_slice() {
            out.mismatches += 1;
        }
        out.cases += 1;
    }
    out
}

pub fn random_field(rng: &mut ChaCha8Rng) -> ScalarField {
    let dims = [rng.gen_range(1..=7), rng.gen_range(1..=7), rng.gen_range(1..=7)];
    let n = dims.iter().product();
    let data = match rng.gen_range(0..4) {
        0 => vec![rng.gen_range(0.0..1.0); n],
        1 => (0..n).map(|_| rng.gen_range(0..4) as f64 * 0.25).collect(),
        _ => (0..n).map(|_| rng.gen_range(0.0..5.0f64).powi(2)).collect(),
    };
    ScalarField::new(dims, data).unwrap()
}

fn at(f: &ScalarField, p: [usize; 3]) -> f64 {
    f.data[(p[0] * f.dims[1] + p[1]) * f.dims[2] + p[2]]
}

pub fn check_normalize(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::default();
    for _ in 0..cases {
        let f = random_field(&mut rng);
        let got = normalize(&f);
        let mut lo = f.data[0];
        let mut hi = f.data[0];
        for v in &f.data {
            if *v < lo {
                lo = *v;
            }
            if *v > hi {
                hi = *v;
            }
        }
        for (g, v) in got.data.iter().zip(&f.data) {
            let want = if hi == lo { 0.0 } else { (v - lo) / (hi - lo) };
            out.diff(*g, want);
        }
        if got.dims != f.dims {
            out.mismatches += 1;
        }
        out.cases += 1;
    }
    out
}

/// `(rows, cols)` of the plane orthogonal to `axis`, and the 3D point for `(r, c)` at depth `t`.
fn plane(dims: [usize; 3], axis: usize) -> (usize, usize) {
    let rest: Vec<usize> = (0..3).filter(|a| *a != axis).map(|a| dims[a]).collect();
    (rest[0], rest[1])
}

fn point(axis: usize, r: usize, c: usize, t: usize) -> [usize; 3] {
    let mut p = [0; 3];
    let rest: Vec<usize> = (0..3).filter(|a| *a != axis).collect();
    p[axis] = t;
    p[rest[0]] = r;
    p[rest[1]] = c;
    p
}

const AXES: [Axis; 3] = [Axis::I, Axis::J, Axis::K];

pub fn check_projection(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::default();
    for _ in 0..cases {
        let f = random_field(&mut rng);
        for (a, axis) in AXES.into_iter().enumerate() {
            let p = project(&f, axis).values;
            let (rows, cols) = plane(f.dims, a);
            if (p.rows, p.cols) != (rows, cols) {
                out.mismatches += 1;
                continue;
            }
            for r in 0..rows {
                for c in 0..cols {
                    let mut m = at(&f, point(a, r, c, 0));
                    for t in 1..f.dims[a] {
                        m = m.max(at(&f, point(a, r, c, t)));
                    }
                    if p.get(r, c) != m {
                        out.mismatches += 1;
                    }
                }
            }
        }
        out.cases += 1;
    }
    out
}

pub fn check_slice(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::default();
    for _ in 0..cases {
        let f = random_field(&mut rng);
        for (a, axis) in AXES.into_iter().enumerate() {
            let t = rng.gen_range(0..f.dims[a]);
            let s = slice(&f, axis, t).unwrap();
            let (rows, cols) = plane(f.dims, a);
            if (s.rows, s.cols) != (rows, cols) {
                out.mismatches += 1;
                continue;
            }
            for r in 0..rows {
                for c in 0..cols {
                    if s.get(r, c) != at(&f, point(a, r, c, t)) {
                        out.mismatches += 1;
                    }
                }
            }
            if slice(&f, axis, f.dims[a]).is_ok() {
                out.mismatches += 1;
            }
        }
        out.cases += 1;
    }
    out
}

/// Rank of each occupied voxel = number of occupied voxels ahead of it
/// (larger value, or equal value at a smaller index); band = rank * 10 / n + 1.
pub fn rank_oracle(f: &ScalarField, occ: &VoxelGrid) -> Vec<u8> {
    let occupied: Vec<usize> = (0..f.data.len()).filter(|i| occ.data()[*i] != 0.0).collect();
    let n = occupied.len();
    let mut bands = vec![0u8; f.data.len()];
    for &i in &occupied {
        let ahead = occupied
            .iter()
            .filter(|&&j| f.data[j] > f.data[i] || (f.data[j] == f.data[i] && j < i))
            .count();
        bands[i] = (ahead * RANK_COUNT / n + 1) as u8;
    }
    bands
}

pub fn check_rank_bands(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Outcome::default();
    while out.cases < cases {
        let f = random_field(&mut rng);
        let occ_data: Vec<f32> = (0..f.data.len()).map(|_| if rng.gen_bool(0.6) { 1.0 } else { 0.0 }).collect();
        let occ = VoxelGrid::from_data(f.dims, ValueKind::Occupancy, occ_data).unwrap();
        if occ.occupied_count() == 0 {
            if rank_bands(&f, &occ).is_ok() {
                out.mismatches += 1;
            }
            continue;
        }
        let got = rank_bands(&f, &occ).unwrap();
        if got.bands != rank_oracle(&f, &occ) {
            out.mismatches += 1;
        }
        out.cases += 1;
    }
    out
}
