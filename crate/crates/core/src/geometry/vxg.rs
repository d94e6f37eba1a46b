//! VXG1 voxel file format.
//!
//! Layout: `"VXG1"`, three `u32` LE dims `D H W`, one value-kind byte
//! (0 = occupancy `u8`, 1 = `f32` LE), then the payload in linear order.

use super::grid::{ValueKind, VoxelGrid};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VXG1";
const HEADER_LEN: usize = 4 + 12 + 1;

pub fn write_voxel_file(grid: &VoxelGrid) -> Vec<u8> {
    let [d, h, w] = grid.dims();
    let width = match grid.kind() {
        ValueKind::Occupancy => 1,
        ValueKind::Scalar => 4,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + grid.len() * width);
    out.extend_from_slice(MAGIC);
    for dim in [d, h, w] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.push(grid.kind().code());
    match grid.kind() {
        ValueKind::Occupancy => out.extend(grid.data().iter().map(|v| *v as u8)),
        ValueKind::Scalar => {
            for v in grid.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn read_voxel_file(bytes: &[u8]) -> Result<VoxelGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected VXG1".into()));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let dims = [dim(4), dim(8), dim(12)];
    if dims.iter().any(|d| *d == 0) {
        return Err(Error::Format(format!("zero dimension in header {dims:?}")));
    }
    let kind = ValueKind::from_code(bytes[16])?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    let width = match kind {
        ValueKind::Occupancy => 1,
        ValueKind::Scalar => 4,
    };
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "dims {}x{}x{} need a {}-byte payload, found {}",
            dims[0],
            dims[1],
            dims[2],
            count * width,
            payload.len()
        )));
    }
    let data = match kind {
        ValueKind::Occupancy => payload
            .iter()
            .map(|b| match b {
                0 => Ok(0.0),
                1 => Ok(1.0),
                other => Err(Error::Format(format!("occupancy byte {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<f32>>>()?,
        ValueKind::Scalar => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    VoxelGrid::from_data(dims, kind, data)
}
