//! Cross-entropy loss, SGD with momentum, and the epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{argmax_rows, Network};
use crate::nn::{softmax, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 8,
            epochs: 60,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // a zero rate is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Previous total update of every parameter, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: Vec<Tensor>,
}

impl OptimizerState {
    pub fn for_model(model: &Network) -> Self {
        OptimizerState {
            velocity: model.param_shapes().iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Argument(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= classes) {
        return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Batch-mean of `-ln p[label]`, plus the gradient with respect to the logits
/// that produced `probs` through softmax: `(probs - onehot) / N`.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [n, c] = probs.dims2()?;
    check_labels(labels, n, c)?;
    let p = probs.data();
    let loss = labels
        .iter()
        .enumerate()
        .map(|(s, l)| -p[s * c + l].ln())
        .sum::<f64>()
        / n as f64;
    Ok((loss, logit_grad(probs, labels, n, c)))
}

/// [`cross_entropy`] evaluated from logits with log-sum-exp, finite for any finite logits.
pub fn cross_entropy_logits(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [n, c] = logits.dims2()?;
    check_labels(labels, n, c)?;
    let z = logits.data();
    let mut loss = 0.0;
    for (s, l) in labels.iter().enumerate() {
        let row = &z[s * c..(s + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[*l];
    }
    let probs = softmax(logits)?;
    Ok((loss / n as f64, logit_grad(&probs, labels, n, c)))
}

fn logit_grad(probs: &Tensor, labels: &[usize], n: usize, c: usize) -> Tensor {
    let mut g = probs.clone();
    for (s, l) in labels.iter().enumerate() {
        g.data_mut()[s * c + l] -= 1.0;
    }
    g.map(|v| v / n as f64)
}

/// `theta += -lr * grad + momentum * velocity`, then `velocity` becomes that update.
pub fn sgd_momentum_step(
    params: Vec<&mut Tensor>,
    grads: &[Tensor],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} velocities",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::Contract(format!(
                "parameter {:?}, gradient {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    let (lr, mom) = (config.learning_rate, config.momentum);
    for ((p, g), v) in params.into_iter().zip(grads).zip(&mut state.velocity) {
        for ((theta, grad), delta) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            let prev = *delta;
            *theta = *theta - lr * grad + mom * prev;
            *delta = -lr * grad + mom * prev;
        }
    }
    Ok(())
}

/// In-memory labelled grids of one resolution.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub resolution: usize,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(resolution: usize) -> Self {
        Dataset {
            resolution,
            ..Default::default()
        }
    }

    pub fn push(&mut self, input: Vec<f64>, label: usize) -> Result<()> {
        if input.len() != self.resolution.pow(3) {
            return Err(Error::Shape(format!(
                "sample of {} values in a {}^3 dataset",
                input.len(),
                self.resolution
            )));
        }
        self.inputs.push(input);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// `(N, 1, R, R, R)` batch of the given rows.
    pub fn batch(&self, rows: &[usize]) -> Tensor {
        let r = self.resolution;
        let mut data = Vec::with_capacity(rows.len() * r * r * r);
        for &i in rows {
            data.extend_from_slice(&self.inputs[i]);
        }
        Tensor::from_vec(&[rows.len(), 1, r, r, r], data).expect("rows are non-empty")
    }
}

const EVAL_CHUNK: usize = 16;

/// Mean loss and accuracy in inference mode.
pub fn evaluate_dataset(model: &Network, data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty dataset".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let pass = model.forward_infer(&data.batch(chunk))?;
        let labels: Vec<usize> = chunk.iter().map(|i| data.labels[*i]).collect();
        let (l, _) = cross_entropy_logits(&pass.logits, &labels)?;
        loss += l * chunk.len() as f64;
        correct += argmax_rows(&pass.probs)?
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Runs `config.epochs` epochs of shuffled mini-batch SGD with momentum, then
/// measures train and validation loss/accuracy in inference mode after each.
pub fn train(
    mut model: Network,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network, Vec<EpochRecord>)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Argument("training and validation sets must be non-empty".into()));
    }
    for set in [train_set, val_set] {
        if set.resolution != model.resolution() {
            return Err(Error::Shape(format!(
                "dataset resolution {} but model resolution {}",
                set.resolution,
                model.resolution()
            )));
        }
        check_labels(&set.labels, set.len(), model.num_classes())?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = OptimizerState::for_model(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let x = train_set.batch(rows);
            let labels: Vec<usize> = rows.iter().map(|i| train_set.labels[*i]).collect();
            let pass = model.forward_train(&x)?;
            let (loss, grad) = cross_entropy_logits(&pass.logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b + 1 });
            }
            let grads = model.backward(pass, &grad, true)?.params.expect("requested");
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, batch: b + 1 });
            }
            sgd_momentum_step(model.params_mut(), &grads, &mut state, config)?;
        }
        model.epochs_completed += 1;
        let (train_loss, train_accuracy) = evaluate_dataset(&model, train_set)?;
        let (val_loss, val_accuracy) = evaluate_dataset(&model, val_set)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let rec = EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        on_epoch(&rec);
        records.push(rec);
    }
    Ok((model, records))
}

/// Formats like C's `%.9g`.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const LOG_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

pub fn log_csv_row(r: &EpochRecord) -> String {
    format!(
        "{},{},{},{},{}",
        r.epoch,
        format_sig9(r.train_loss),
        format_sig9(r.train_accuracy),
        format_sig9(r.val_loss),
        format_sig9(r.val_accuracy)
    )
}

pub fn log_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&log_csv_row(r));
        out.push('\n');
    }
    out
}
