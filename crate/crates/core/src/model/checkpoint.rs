//! ASN1 checkpoint format.
//!
//! ```text
//! "ASN1" | u32 version = 1
//! u32 resolution | u32 channels[4] (0 = block absent) | u32 num_classes
//! per block: conv weight, conv bias, BN gamma, BN beta, BN running mean, BN running var
//! dense weight, dense bias
//!   (each tensor: u32 rank, u32 dims[rank], f64 payload)
//! u64 epochs completed | u64 seed | u64 bitmask of blocks whose BN statistics are populated
//! ```
//! All integers and floats little-endian.

use super::{ArchConfig, ConvBlock, Network, CONV_STRIDE, MAX_BLOCKS, PADDING};
use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, Conv3dParams, DenseParams, Tensor};

const MAGIC: &[u8; 4] = b"ASN1";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let cfg = model.config();
    put_u32(&mut out, cfg.resolution as u32);
    for slot in 0..MAX_BLOCKS {
        put_u32(&mut out, cfg.channels.get(slot).copied().unwrap_or(0) as u32);
    }
    put_u32(&mut out, cfg.num_classes as u32);
    let mut tracked = 0u64;
    for (b, block) in model.blocks.iter().enumerate() {
        let bn = &block.bn;
        for t in [&block.conv.weight, &block.conv.bias, &bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
            put_tensor(&mut out, t);
        }
        if bn.tracked {
            tracked |= 1 << b;
        }
    }
    put_tensor(&mut out, &model.dense.weight);
    put_tensor(&mut out, &model.dense.bias);
    out.extend_from_slice(&model.epochs_completed.to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&tracked.to_le_bytes());
    out
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected ASN1".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let resolution = r.u32()? as usize;
    let mut slots = [0usize; MAX_BLOCKS];
    for s in &mut slots {
        *s = r.u32()? as usize;
    }
    let used = slots.iter().take_while(|c| **c > 0).count();
    if slots[used..].iter().any(|c| *c > 0) {
        return Err(Error::Format(format!("channel slots {slots:?} have a gap")));
    }
    let num_classes = r.u32()? as usize;
    let config = ArchConfig::new(resolution, slots[..used].to_vec(), num_classes)
        .map_err(|e| Error::Format(format!("invalid stored config: {e}")))?;

    let mut blocks = Vec::with_capacity(used);
    for _ in 0..used {
        let weight = r.tensor()?;
        let bias = r.tensor()?;
        let channels = bias.len();
        let conv = Conv3dParams::new(weight, bias, CONV_STRIDE, PADDING)
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut bn = BatchNormParams::new(channels);
        bn.gamma = r.tensor()?;
        bn.beta = r.tensor()?;
        bn.running_mean = r.tensor()?;
        bn.running_var = r.tensor()?;
        blocks.push(ConvBlock { conv, bn });
    }
    let dense = DenseParams::new(r.tensor()?, r.tensor()?).map_err(|e| Error::Format(e.to_string()))?;
    let epochs = r.u64()?;
    let seed = r.u64()?;
    let tracked = r.u64()?;
    if r.at != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.at
        )));
    }
    for (b, block) in blocks.iter_mut().enumerate() {
        block.bn.tracked = tracked & (1 << b) != 0;
    }
    let mut net = Network::from_parts(config, blocks, dense, seed)
        .map_err(|e| Error::Format(format!("inconsistent checkpoint: {e}")))?;
    net.epochs_completed = epochs;
    Ok(net)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.shape().len() as u32);
    for d in t.shape() {
        put_u32(out, *d as u32);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated checkpoint: need {n} bytes at offset {}, have {}",
                    self.at,
                    self.bytes.len() - self.at
                ))
            })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("tensor rank {rank} out of range")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .filter(|c| *c > 0)
            .ok_or_else(|| Error::Format(format!("bad tensor shape {shape:?}")))?;
        let raw = self.take(count.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(&shape, data).map_err(|e| Error::Format(e.to_string()))
    }
}
