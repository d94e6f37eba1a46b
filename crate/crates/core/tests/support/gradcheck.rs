//! Central finite-difference checks for every layer backward and for the
//! whole network. Each check returns a [`Report`] with the worst relative error.
#![allow(dead_code)]

use archshape::model::{build_model, ArchConfig, Network};
use archshape::nn::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv3d_backward, conv3d_forward, dense_backward,
    dense_forward, maxpool3d_backward, maxpool3d_forward, relu_backward, relu_forward, BatchNormParams,
    Conv3dParams, DenseParams, Tensor,
};
use archshape::saliency::{input_gradient, Score};
use archshape::training::cross_entropy_logits;
use archshape::{ValueKind, VoxelGrid};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub const H: f64 = 1e-5;
/// Denominator floor so that entries that are zero analytically compare on
/// an absolute scale instead of dividing roundoff by zero.
pub const FLOOR: f64 = 1e-4;
pub const LAYER_TOL: f64 = 1e-6;
pub const END_TO_END_TOL: f64 = 1e-5;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Report {
    pub trials: usize,
    pub entries: usize,
    /// Entries skipped because a perturbation crossed a ReLU or max-pool branch.
    pub skipped: usize,
    pub max_rel: f64,
}

impl Report {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.entries += 1;
        let e = rel_err(analytic, numeric);
        if !(e <= self.max_rel) {
            self.max_rel = e;
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.trials > 0 && self.entries > 0 && self.max_rel <= tol
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries away from the ReLU kink: |x| >= 1e-3.
pub fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = uniform(rng, shape);
    for v in t.data_mut() {
        while v.abs() < 1e-3 {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    t
}

/// Distinct entries in [-1, 1) spaced at least 1e-3 apart, so every pooling
/// window has a unique maximum that survives a +/-h perturbation.
pub fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    assert!(n <= 1000);
    let step = 2.0 / n as f64;
    let mut vals: Vec<f64> = (0..n).map(|i| -1.0 + i as f64 * step + rng.gen_range(0.0..step * 0.25)).collect();
    vals.shuffle(rng);
    Tensor::from_vec(shape, vals).unwrap()
}

/// d/dx_i of `sum(r * f(x))`, differencing `f` elementwise before contracting with `r`.
pub fn numeric_vjp(x: &Tensor, r: &Tensor, mut f: impl FnMut(&Tensor) -> Tensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + H;
        let plus = f(&xp);
        xp.data_mut()[i] = orig - H;
        let minus = f(&xp);
        xp.data_mut()[i] = orig;
        out.push(
            plus.data()
                .iter()
                .zip(minus.data())
                .zip(r.data())
                .map(|((p, m), w)| w * (p - m))
                .sum::<f64>()
                / (2.0 * H),
        );
    }
    out
}

fn compare(report: &mut Report, analytic: &Tensor, numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len());
    for (a, n) in analytic.data().iter().zip(numeric) {
        report.record(*a, *n);
    }
}

fn small_dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> [usize; 3] {
    [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)]
}

pub fn check_conv(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let n = rng.gen_range(1..=2);
        let (ci, co) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let k = rng.gen_range(1..=3);
        let stride = rng.gen_range(1..=2);
        let padding = rng.gen_range(0..k);
        let [d, h, w] = small_dims(&mut rng, k, 4);
        let x = uniform(&mut rng, &[n, ci, d, h, w]);
        let p = Conv3dParams::new(uniform(&mut rng, &[co, ci, k, k, k]), uniform(&mut rng, &[co]), stride, padding)
            .unwrap();
        let (y, ctx) = conv3d_forward(&x, &p).unwrap();
        let r = uniform(&mut rng, y.shape());
        let g = conv3d_backward(&r, ctx, &p).unwrap();
        compare(&mut rep, &g.input, &numeric_vjp(&x, &r, |x| conv3d_forward(x, &p).unwrap().0));
        let nw = numeric_vjp(&p.weight, &r, |w| {
            let q = Conv3dParams { weight: w.clone(), ..p.clone() };
            conv3d_forward(&x, &q).unwrap().0
        });
        compare(&mut rep, &g.weight, &nw);
        let nb = numeric_vjp(&p.bias, &r, |b| {
            let q = Conv3dParams { bias: b.clone(), ..p.clone() };
            conv3d_forward(&x, &q).unwrap().0
        });
        compare(&mut rep, &g.bias, &nb);
        rep.trials += 1;
    }
    rep
}

fn bn_params(rng: &mut ChaCha8Rng, c: usize, tracked: bool) -> BatchNormParams {
    let mut p = BatchNormParams::new(c);
    p.gamma = uniform(rng, &[c]);
    p.beta = uniform(rng, &[c]);
    if tracked {
        p.running_mean = uniform(rng, &[c]);
        p.running_var = Tensor::from_vec(&[c], (0..c).map(|_| rng.gen_range(0.2..2.0)).collect()).unwrap();
        p.tracked = true;
    }
    p
}

/// Training-mode batch norm (batch statistics).
pub fn check_batchnorm_train(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let n = rng.gen_range(1..=3);
        let c = rng.gen_range(1..=2);
        let [d, h, w] = small_dims(&mut rng, 1, 3);
        let shape = [n, c, d, h, w];
        // at least two values per channel, or the batch variance is zero
        let shape = if n * d * h * w < 2 { [2, c, d, h, w] } else { shape };
        let x = uniform(&mut rng, &shape);
        let p = bn_params(&mut rng, c, false);
        let run = |x: &Tensor, p: &BatchNormParams| batchnorm_train(x, &mut p.clone()).unwrap();
        let (y, ctx) = run(&x, &p);
        let r = uniform(&mut rng, y.shape());
        let g = batchnorm_backward(&r, ctx, &p).unwrap();
        compare(&mut rep, &g.input, &numeric_vjp(&x, &r, |x| run(x, &p).0));
        let ng = numeric_vjp(&p.gamma, &r, |t| run(&x, &BatchNormParams { gamma: t.clone(), ..p.clone() }).0);
        compare(&mut rep, &g.gamma, &ng);
        let nb = numeric_vjp(&p.beta, &r, |t| run(&x, &BatchNormParams { beta: t.clone(), ..p.clone() }).0);
        compare(&mut rep, &g.beta, &nb);
        rep.trials += 1;
    }
    rep
}

/// Inference-mode batch norm (fixed running statistics).
pub fn check_batchnorm_infer(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=3);
        let [d, h, w] = small_dims(&mut rng, 1, 3);
        let x = uniform(&mut rng, &[n, c, d, h, w]);
        let p = bn_params(&mut rng, c, true);
        let (y, ctx) = batchnorm_infer(&x, &p).unwrap();
        let r = uniform(&mut rng, y.shape());
        let g = batchnorm_backward(&r, ctx, &p).unwrap();
        compare(&mut rep, &g.input, &numeric_vjp(&x, &r, |x| batchnorm_infer(x, &p).unwrap().0));
        let ng = numeric_vjp(&p.gamma, &r, |t| {
            batchnorm_infer(&x, &BatchNormParams { gamma: t.clone(), ..p.clone() }).unwrap().0
        });
        compare(&mut rep, &g.gamma, &ng);
        let nb = numeric_vjp(&p.beta, &r, |t| {
            batchnorm_infer(&x, &BatchNormParams { beta: t.clone(), ..p.clone() }).unwrap().0
        });
        compare(&mut rep, &g.beta, &nb);
        rep.trials += 1;
    }
    rep
}

pub fn check_maxpool(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let n = rng.gen_range(1..=2);
        let c = rng.gen_range(1..=2);
        let win = [rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2)];
        let stride = rng.gen_range(1..=2);
        let dims: [usize; 3] = std::array::from_fn(|a| rng.gen_range(win[a]..=4));
        let x = distinct(&mut rng, &[n, c, dims[0], dims[1], dims[2]]);
        let (y, ctx) = maxpool3d_forward(&x, win, stride).unwrap();
        let r = uniform(&mut rng, y.shape());
        let g = maxpool3d_backward(&r, ctx).unwrap();
        compare(&mut rep, &g, &numeric_vjp(&x, &r, |x| maxpool3d_forward(x, win, stride).unwrap().0));
        rep.trials += 1;
    }
    rep
}

pub fn check_relu(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let n = rng.gen_range(1..=3);
        let w = rng.gen_range(1..=12);
        let x = off_kink(&mut rng, &[n, w]);
        let (y, ctx) = relu_forward(&x);
        let r = uniform(&mut rng, y.shape());
        let g = relu_backward(&r, ctx).unwrap();
        compare(&mut rep, &g, &numeric_vjp(&x, &r, |x| relu_forward(x).0));
        rep.trials += 1;
    }
    rep
}

pub fn check_dense(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let (n, ci, co) = (rng.gen_range(1..=3), rng.gen_range(1..=8), rng.gen_range(1..=4));
        let x = uniform(&mut rng, &[n, ci]);
        let p = DenseParams::new(uniform(&mut rng, &[co, ci]), uniform(&mut rng, &[co])).unwrap();
        let (y, ctx) = dense_forward(&x, &p).unwrap();
        let r = uniform(&mut rng, y.shape());
        let g = dense_backward(&r, ctx, &p).unwrap();
        compare(&mut rep, &g.input, &numeric_vjp(&x, &r, |x| dense_forward(x, &p).unwrap().0));
        let nw = numeric_vjp(&p.weight, &r, |w| {
            dense_forward(&x, &DenseParams { weight: w.clone(), ..p.clone() }).unwrap().0
        });
        compare(&mut rep, &g.weight, &nw);
        let nb = numeric_vjp(&p.bias, &r, |b| {
            dense_forward(&x, &DenseParams { bias: b.clone(), ..p.clone() }).unwrap().0
        });
        compare(&mut rep, &g.bias, &nb);
        rep.trials += 1;
    }
    rep
}

/// Softmax followed by mean cross-entropy, differentiated with respect to the logits.
pub fn check_softmax_ce(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let (n, c) = (rng.gen_range(1..=4), rng.gen_range(2..=5));
        let logits = uniform(&mut rng, &[n, c]).map(|v| 3.0 * v);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let (_, g) = cross_entropy_logits(&logits, &labels).unwrap();
        let one = Tensor::full(&[1], 1.0);
        let num = numeric_vjp(&logits, &one, |z| Tensor::full(&[1], cross_entropy_logits(z, &labels).unwrap().0));
        compare(&mut rep, &g, &num);
        rep.trials += 1;
    }
    rep
}

/// Small network with tracked, non-trivial batch-norm statistics.
pub fn fixture_model(rng: &mut ChaCha8Rng, resolution: usize, channels: Vec<usize>) -> Network {
    let mut net = build_model(ArchConfig::new(resolution, channels, 2).unwrap(), rng.gen()).unwrap();
    for b in &mut net.blocks {
        let c = b.bn.channels();
        b.bn = bn_params(rng, c, true);
        b.conv.bias = uniform(rng, &[c]).map(|v| 0.1 * v);
    }
    let c = net.num_classes();
    net.dense.bias = uniform(rng, &[c]);
    net
}

fn random_occupancy(rng: &mut ChaCha8Rng, r: usize) -> VoxelGrid {
    let data = (0..r * r * r).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
    VoxelGrid::from_data([r; 3], ValueKind::Occupancy, data).unwrap()
}

fn score_of(pass: &archshape::model::ForwardPass, target: usize, score: Score) -> f64 {
    match score {
        Score::Logit => pass.logits.data()[target],
        Score::Probability => pass.probs.data()[target],
    }
}

/// The saliency input gradient against central differences of the class score,
/// on the real-valued relaxation of an occupancy input. Entries whose
/// perturbation changes a ReLU or max-pool branch are counted as skipped.
pub fn check_input_gradient(trials: usize, seed: u64, score: Score) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for t in 0..trials {
        let (r, channels) = if t % 2 == 0 { (4, vec![3]) } else { (8, vec![2, 3]) };
        let model = fixture_model(&mut rng, r, channels);
        let grid = random_occupancy(&mut rng, r);
        let target = rng.gen_range(0..2);
        let g = input_gradient(&model, &grid, target, score).unwrap();
        let mut x = Tensor::from_vec(&[1, 1, r, r, r], grid.to_f64()).unwrap();
        let base = model.forward_infer(&x).unwrap();
        for i in 0..x.len() {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + H;
            let plus_pass = model.forward_infer(&x).unwrap();
            let plus = score_of(&plus_pass, target, score);
            x.data_mut()[i] = orig - H;
            let minus_pass = model.forward_infer(&x).unwrap();
            let minus = score_of(&minus_pass, target, score);
            x.data_mut()[i] = orig;
            if !(base.same_branches(&plus_pass) && base.same_branches(&minus_pass)) {
                rep.skipped += 1;
                continue;
            }
            rep.record(g.data[i], (plus - minus) / (2.0 * H));
        }
        rep.trials += 1;
    }
    rep
}

/// Every parameter gradient of a training-mode forward plus cross-entropy.
pub fn check_network_params(trials: usize, seed: u64) -> Report {
    let mut rng = rng(seed);
    let mut rep = Report::default();
    for _ in 0..trials {
        let model = fixture_model(&mut rng, 4, vec![2]);
        let n = 3;
        let x = uniform(&mut rng, &[n, 1, 4, 4, 4]);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let mut m = model.clone();
        let pass = m.forward_train(&x).unwrap();
        let (_, gl) = cross_entropy_logits(&pass.logits, &labels).unwrap();
        let base_pass = model.clone().forward_train(&x).unwrap();
        let grads = m.backward(pass, &gl, true).unwrap().params.unwrap();
        let n_params = grads.len();
        for p in 0..n_params {
            for e in 0..grads[p].len() {
                let eval = |delta: f64| {
                    let mut mm = model.clone();
                    mm.params_mut()[p].data_mut()[e] += delta;
                    let pass = mm.forward_train(&x).unwrap();
                    let loss = cross_entropy_logits(&pass.logits, &labels).unwrap().0;
                    (loss, pass)
                };
                let (lp, pp) = eval(H);
                let (lm, pm) = eval(-H);
                if !(base_pass.same_branches(&pp) && base_pass.same_branches(&pm)) {
                    rep.skipped += 1;
                    continue;
                }
                rep.record(grads[p].data()[e], (lp - lm) / (2.0 * H));
            }
        }
        rep.trials += 1;
    }
    rep
}
