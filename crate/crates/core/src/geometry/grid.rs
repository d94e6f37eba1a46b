use crate::error::{Error, Result};

/// What the cells of a [`VoxelGrid`] hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    /// 0/1 occupancy, one byte per cell on disk.
    Occupancy,
    /// Real scalar, 32-bit float on disk.
    Scalar,
}

impl ValueKind {
    pub fn code(self) -> u8 {
        match self {
            ValueKind::Occupancy => 0,
            ValueKind::Scalar => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(ValueKind::Occupancy),
            1 => Ok(ValueKind::Scalar),
            c => Err(Error::Format(format!("unknown value-kind code {c}"))),
        }
    }
}

/// A `D x H x W` field of cells, linear index `(i * H + j) * W + k`.
///
/// Grids are placed in the canonical unit domain: the longest axis spans
/// `[-0.5, 0.5]` and the grid is centered on the origin. Cell `(i, j, k)`
/// covers `x`, `y`, `z` respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    kind: ValueKind,
    data: Vec<f32>,
    origin: [f64; 3],
    voxel_size: f64,
}

impl VoxelGrid {
    /// All-zero grid in the canonical placement.
    pub fn zeros(dims: [usize; 3], kind: ValueKind) -> Result<Self> {
        let len = checked_len(dims)?;
        Ok(Self::placed(dims, kind, vec![0.0; len]))
    }

    pub fn from_data(dims: [usize; 3], kind: ValueKind, data: Vec<f32>) -> Result<Self> {
        let len = checked_len(dims)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "grid {}x{}x{} needs {len} values, got {}",
                dims[0],
                dims[1],
                dims[2],
                data.len()
            )));
        }
        if kind == ValueKind::Occupancy {
            if let Some(v) = data.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(Error::Argument(format!("occupancy value {v} is not 0 or 1")));
            }
        }
        Ok(Self::placed(dims, kind, data))
    }

    fn placed(dims: [usize; 3], kind: ValueKind, data: Vec<f32>) -> Self {
        let longest = *dims.iter().max().unwrap() as f64;
        let voxel_size = 1.0 / longest;
        let origin = dims.map(|d| -0.5 * d as f64 * voxel_size);
        VoxelGrid {
            dims,
            kind,
            data,
            origin,
            voxel_size,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[self.index(i, j, k)]
    }

    /// Sets a cell. Occupancy grids accept only 0 and 1.
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f32) {
        debug_assert!(self.kind == ValueKind::Scalar || v == 0.0 || v == 1.0);
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn occupied_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn occupancy_fraction(&self) -> f64 {
        self.occupied_count() as f64 / self.data.len() as f64
    }

    /// Center of cell `(i, j, k)` in model units.
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let idx = [i, j, k];
        std::array::from_fn(|a| self.origin[a] + (idx[a] as f64 + 0.5) * self.voxel_size)
    }

    /// Cell values widened to 64-bit, the network's input layout.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| *v as f64).collect()
    }
}

fn checked_len(dims: [usize; 3]) -> Result<usize> {
    if dims.iter().any(|d| *d == 0) {
        return Err(Error::Argument(format!("grid dims must be positive, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::Argument(format!("grid dims {dims:?} overflow")))
}
