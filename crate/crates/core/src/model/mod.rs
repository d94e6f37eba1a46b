//! The classifier: conv-BN-ReLU-maxpool blocks, flatten, one dense layer, softmax.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv3d_backward, conv3d_backward_input,
    conv3d_forward, dense_backward, dense_forward, maxpool3d_backward, maxpool3d_forward,
    relu_backward, relu_forward, softmax, BatchNormContext, BatchNormParams, Conv3dParams,
    ConvContext, DenseContext, DenseParams, Mode, PoolContext, ReluContext, Tensor,
};

pub const KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 1;
pub const PADDING: usize = 1;
pub const POOL: usize = 2;
/// Blocks in the standard architecture, and slots in the checkpoint header.
pub const MAX_BLOCKS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    /// Edge length of the cubic input grid.
    pub resolution: usize,
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub num_classes: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            resolution: 32,
            channels: vec![8, 16, 32, 64],
            num_classes: 2,
        }
    }
}

impl ArchConfig {
    pub fn new(resolution: usize, channels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let c = ArchConfig {
            resolution,
            channels,
            num_classes,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() > MAX_BLOCKS {
            return Err(Error::Config(format!(
                "at most {MAX_BLOCKS} conv blocks, got {}",
                self.channels.len()
            )));
        }
        if self.channels.iter().any(|c| *c == 0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        let shrink = POOL.pow(self.channels.len() as u32);
        if self.resolution == 0 || self.resolution % shrink != 0 {
            return Err(Error::Config(format!(
                "resolution {} is not divisible by {shrink} ({} pooling halvings)",
                self.resolution,
                self.channels.len()
            )));
        }
        Ok(())
    }

    /// Spatial edge after the last block.
    pub fn final_edge(&self) -> usize {
        self.resolution / POOL.pow(self.channels.len() as u32)
    }

    /// Width of the flattened feature vector fed to the dense layer.
    pub fn flatten_width(&self) -> usize {
        let c = self.channels.last().copied().unwrap_or(1);
        c * self.final_edge().pow(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub conv: Conv3dParams,
    pub bn: BatchNormParams,
}

/// Architecture, learned parameters, BN running statistics and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: ArchConfig,
    pub blocks: Vec<ConvBlock>,
    pub dense: DenseParams,
    pub epochs_completed: u64,
    pub seed: u64,
}

fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

/// Seeded Glorot-uniform weights, zero biases, BN at identity with empty statistics.
pub fn build_model(config: ArchConfig, seed: u64) -> Result<Network> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k3 = KERNEL.pow(3);
    let mut blocks = Vec::with_capacity(config.channels.len());
    let mut c_in = 1;
    for &c_out in &config.channels {
        let weight = uniform_tensor(&mut rng, &[c_out, c_in, KERNEL, KERNEL, KERNEL], c_in * k3, c_out * k3);
        let conv = Conv3dParams::new(weight, Tensor::zeros(&[c_out]), CONV_STRIDE, PADDING)?;
        blocks.push(ConvBlock {
            conv,
            bn: BatchNormParams::new(c_out),
        });
        c_in = c_out;
    }
    let width = config.flatten_width();
    let weight = uniform_tensor(&mut rng, &[config.num_classes, width], width, config.num_classes);
    let dense = DenseParams::new(weight, Tensor::zeros(&[config.num_classes]))?;
    Ok(Network {
        config,
        blocks,
        dense,
        epochs_completed: 0,
        seed,
    })
}

struct BlockTrace {
    conv: ConvContext,
    bn: BatchNormContext,
    relu: ReluContext,
    pool: PoolContext,
}

/// Everything one forward pass produced, including what backward needs.
pub struct ForwardPass {
    pub logits: Tensor,
    pub probs: Tensor,
    /// Output of each block after pooling, in order.
    pub activations: Vec<Tensor>,
    blocks: Vec<BlockTrace>,
    dense: DenseContext,
    flat_from: Vec<usize>,
}

impl ForwardPass {
    /// True when both passes took the same ReLU and max-pool branches, i.e. the
    /// network is the same affine map around both inputs.
    pub fn same_branches(&self, other: &ForwardPass) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.relu.active() == b.relu.active() && a.pool.argmax() == b.pool.argmax())
    }
}

pub struct Backward {
    /// Gradient with respect to the network input.
    pub input: Tensor,
    /// Parameter gradients in [`Network::params_mut`] order, if requested.
    pub params: Option<Vec<Tensor>>,
}

impl Network {
    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Assembles a network from parts, checking every shape against `config`.
    pub fn from_parts(config: ArchConfig, blocks: Vec<ConvBlock>, dense: DenseParams, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = Network {
            config,
            blocks,
            dense,
            epochs_completed: 0,
            seed,
        };
        net.check_shapes()?;
        Ok(net)
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let cfg = &self.config;
        if self.blocks.len() != cfg.channels.len() {
            return Err(Error::Shape(format!(
                "{} blocks for {} configured channel counts",
                self.blocks.len(),
                cfg.channels.len()
            )));
        }
        let mut c_in = 1;
        for (b, (block, &c_out)) in self.blocks.iter().zip(&cfg.channels).enumerate() {
            let want = [c_out, c_in, KERNEL, KERNEL, KERNEL];
            if block.conv.weight.shape() != want || block.conv.bias.shape() != [c_out] {
                return Err(Error::Shape(format!(
                    "block {b} conv weight {:?}, expected {want:?}",
                    block.conv.weight.shape()
                )));
            }
            if block.conv.stride != CONV_STRIDE || block.conv.padding != PADDING {
                return Err(Error::Shape(format!("block {b} conv stride/padding differ from 1/1")));
            }
            let bn = &block.bn;
            for t in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                if t.shape() != [c_out] {
                    return Err(Error::Shape(format!("block {b} batch norm tensor {:?}", t.shape())));
                }
            }
            c_in = c_out;
        }
        let want = [cfg.num_classes, cfg.flatten_width()];
        if self.dense.weight.shape() != want || self.dense.bias.shape() != [cfg.num_classes] {
            return Err(Error::Shape(format!(
                "dense weight {:?}, expected {want:?}",
                self.dense.weight.shape()
            )));
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let r = self.config.resolution;
        let dims = x.dims5()?;
        if dims[1..] != [1, r, r, r] {
            return Err(Error::Shape(format!(
                "model expects input (N, 1, {r}, {r}, {r}), got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training-mode forward: batch statistics, running statistics updated.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut activations = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &mut self.blocks {
            let (y, conv) = conv3d_forward(&h, &block.conv)?;
            let (y, bn) = batchnorm_train(&y, &mut block.bn)?;
            let (trace, out) = Self::finish_block(y, conv, bn)?;
            traces.push(trace);
            activations.push(out.clone());
            h = out;
        }
        self.head(h, traces, activations)
    }

    /// Inference-mode forward: running statistics, model untouched.
    pub fn forward_infer(&self, x: &Tensor) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut activations = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &self.blocks {
            let (y, conv) = conv3d_forward(&h, &block.conv)?;
            let (y, bn) = batchnorm_infer(&y, &block.bn)?;
            let (trace, out) = Self::finish_block(y, conv, bn)?;
            traces.push(trace);
            activations.push(out.clone());
            h = out;
        }
        self.head(h, traces, activations)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<ForwardPass> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Infer => self.forward_infer(x),
        }
    }

    fn finish_block(y: Tensor, conv: ConvContext, bn: BatchNormContext) -> Result<(BlockTrace, Tensor)> {
        let (y, relu) = relu_forward(&y);
        let (y, pool) = maxpool3d_forward(&y, [POOL; 3], POOL)?;
        Ok((BlockTrace { conv, bn, relu, pool }, y))
    }

    fn head(&self, h: Tensor, blocks: Vec<BlockTrace>, activations: Vec<Tensor>) -> Result<ForwardPass> {
        let flat_from = h.shape().to_vec();
        let n = flat_from[0];
        let width = h.len() / n;
        let flat = h.reshape(&[n, width])?;
        let (logits, dense) = dense_forward(&flat, &self.dense)?;
        let probs = softmax(&logits)?;
        Ok(ForwardPass {
            logits,
            probs,
            activations,
            blocks,
            dense,
            flat_from,
        })
    }

    /// Class probabilities in inference mode.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_infer(x)?.probs)
    }

    /// Backpropagates `grad_logits` (gradient of a scalar with respect to the
    /// pre-softmax logits) through the whole chain.
    pub fn backward(&self, pass: ForwardPass, grad_logits: &Tensor, param_grads: bool) -> Result<Backward> {
        if grad_logits.shape() != pass.logits.shape() {
            return Err(Error::Contract(format!(
                "logit gradient {:?} does not match logits {:?}",
                grad_logits.shape(),
                pass.logits.shape()
            )));
        }
        if pass.blocks.len() != self.blocks.len() {
            return Err(Error::Contract("forward pass belongs to a different network".into()));
        }
        let mut grads: Vec<Tensor> = Vec::new();
        let dense = dense_backward(grad_logits, pass.dense, &self.dense)?;
        let mut g = dense.input.reshape(&pass.flat_from)?;
        let dense_grads = [dense.weight, dense.bias];

        for (block, trace) in self.blocks.iter().zip(pass.blocks).rev() {
            g = maxpool3d_backward(&g, trace.pool)?;
            g = relu_backward(&g, trace.relu)?;
            let bn = batchnorm_backward(&g, trace.bn, &block.bn)?;
            if param_grads {
                let conv = conv3d_backward(&bn.input, trace.conv, &block.conv)?;
                // reversed block order; fixed up below
                grads.extend([bn.beta, bn.gamma, conv.bias, conv.weight]);
                g = conv.input;
            } else {
                g = conv3d_backward_input(&bn.input, &trace.conv, &block.conv)?;
            }
        }
        let params = param_grads.then(|| {
            grads.reverse();
            grads.extend(dense_grads);
            grads
        });
        Ok(Backward { input: g, params })
    }

    /// Learnable tensors in a fixed order: per block conv weight, conv bias,
    /// BN gamma, BN beta; then dense weight and bias.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.dense.weight);
        out.push(&mut self.dense.bias);
        out
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for t in [&b.conv.weight, &b.conv.bias, &b.bn.gamma, &b.bn.beta] {
                out.push(t.shape().to_vec());
            }
        }
        out.push(self.dense.weight.shape().to_vec());
        out.push(self.dense.bias.shape().to_vec());
        out
    }
}

/// Index of the largest entry of each row; ties go to the lower class id.
pub fn argmax_rows(probs: &Tensor) -> Result<Vec<usize>> {
    let [n, c] = probs.dims2()?;
    Ok((0..n)
        .map(|s| {
            let row = &probs.data()[s * c..(s + 1) * c];
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ArchConfig {
        ArchConfig::new(16, vec![2, 2, 3, 3], 2).unwrap()
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_model(small(), 9).unwrap();
        let b = build_model(small(), 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, build_model(small(), 10).unwrap());
    }

    #[test]
    fn flatten_width_at_32() {
        let c = ArchConfig::default();
        assert_eq!(c.flatten_width(), 512);
        let m = build_model(c, 0).unwrap();
        assert_eq!(m.dense.weight.shape(), &[2, 512]);
    }

    #[test]
    fn resolution_24_rejected() {
        let c = ArchConfig {
            resolution: 24,
            ..ArchConfig::default()
        };
        assert!(matches!(build_model(c, 0), Err(Error::Config(_))));
    }

    #[test]
    fn block_output_sizes() {
        let mut m = build_model(ArchConfig::new(32, vec![2, 2, 2, 2], 2).unwrap(), 3).unwrap();
        let x = Tensor::full(&[2, 1, 32, 32, 32], 0.5);
        let pass = m.forward_train(&x).unwrap();
        let edges: Vec<usize> = pass.activations.iter().map(|a| a.shape()[2]).collect();
        assert_eq!(edges, vec![16, 8, 4, 2]);
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let mut m = build_model(small(), 1).unwrap();
        for t in m.params_mut() {
            t.data_mut().fill(0.0);
        }
        let x = Tensor::full(&[2, 1, 16, 16, 16], 1.0);
        let pass = m.forward_train(&x).unwrap();
        assert!(pass.probs.data().iter().all(|p| *p == 0.5));
    }

    #[test]
    fn infer_needs_statistics_and_wrong_resolution_is_shape_error() {
        let mut m = build_model(small(), 1).unwrap();
        let x = Tensor::full(&[1, 1, 16, 16, 16], 1.0);
        assert!(matches!(m.forward_infer(&x), Err(Error::State(_))));
        m.forward_train(&Tensor::full(&[2, 1, 16, 16, 16], 1.0)).unwrap();
        assert!(m.forward_infer(&x).is_ok());
        assert!(matches!(
            m.forward_infer(&Tensor::full(&[1, 1, 32, 32, 32], 1.0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn param_grads_follow_param_order() {
        let mut m = build_model(small(), 4).unwrap();
        let x = Tensor::from_vec(&[2, 1, 16, 16, 16], (0..8192).map(|i| ((i * 7) % 13) as f64 / 13.0).collect()).unwrap();
        let pass = m.forward_train(&x).unwrap();
        let g = Tensor::from_vec(&[2, 2], vec![1.0, -1.0, 0.5, -0.5]).unwrap();
        let back = m.backward(pass, &g, true).unwrap();
        let shapes: Vec<Vec<usize>> = back.params.unwrap().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, m.param_shapes());
        assert_eq!(back.input.shape(), x.shape());
    }

    #[test]
    fn argmax_ties_go_low() {
        let p = Tensor::from_vec(&[2, 2], vec![0.5, 0.5, 0.2, 0.8]).unwrap();
        assert_eq!(argmax_rows(&p).unwrap(), vec![0, 1]);
    }
}
