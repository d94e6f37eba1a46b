//! PGM, CSV and VXG1 renderings of saliency outputs.

use super::{Matrix2, RankBandMap, ScalarField};
use crate::error::Result;
use crate::geometry::{ValueKind, VoxelGrid};

/// ASCII `P2` greymap; `[0, 1]` maps to `0..=255` rounding halves up.
pub fn matrix_pgm(m: &Matrix2) -> String {
    let mut out = format!("P2\n{} {}\n255\n", m.cols, m.rows);
    for r in 0..m.rows {
        let row: Vec<String> = (0..m.cols)
            .map(|c| ((m.get(r, c) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8).to_string())
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Raw values, one matrix row per line, shortest round-trip decimal form.
pub fn matrix_csv(m: &Matrix2) -> String {
    let mut out = String::new();
    for r in 0..m.rows {
        let row: Vec<String> = (0..m.cols).map(|c| m.get(r, c).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn field_to_grid(f: &ScalarField) -> Result<VoxelGrid> {
    VoxelGrid::from_data(f.dims, ValueKind::Scalar, f.data.iter().map(|v| *v as f32).collect())
}

pub fn bands_to_grid(b: &RankBandMap) -> Result<VoxelGrid> {
    VoxelGrid::from_data(b.dims, ValueKind::Scalar, b.bands.iter().map(|v| *v as f32).collect())
}
