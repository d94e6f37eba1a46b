//! Invariants every saliency computation must satisfy on an occupied form.
#![allow(dead_code)]

use archshape::saliency::{
    compute_saliency, project, rank_bands, slice, Axis, ImportanceMode, Score, TargetSource,
};
use archshape::{Network, VoxelGrid};

const AXES: [Axis; 3] = [Axis::I, Axis::J, Axis::K];

/// Checks one form under both importance modes; `Err` names the first violation.
pub fn check_invariants(model: &Network, grid: &VoxelGrid) -> Result<(), String> {
    let abs = compute_saliency(model, grid, ImportanceMode::Abs, TargetSource::Predicted, None, Score::Logit)
        .map_err(|e| e.to_string())?;
    let sq = compute_saliency(model, grid, ImportanceMode::Square, TargetSource::Predicted, None, Score::Logit)
        .map_err(|e| e.to_string())?;
    if abs.gradient != sq.gradient {
        return Err("gradient differs between modes".into());
    }
    for res in [&abs, &sq] {
        if let Some(v) = res.importance.data.iter().find(|v| !(**v >= 0.0)) {
            return Err(format!("{:?} importance has negative entry {v}", res.mode));
        }
        let n = &res.normalized.data;
        if n.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("{:?} normalized value outside [0, 1]", res.mode));
        }
        let m = &res.importance.data;
        let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if hi > lo {
            if !n.contains(&0.0) || !n.contains(&1.0) {
                return Err(format!("{:?} normalized endpoints not attained", res.mode));
            }
        } else if n.iter().any(|v| *v != 0.0) {
            return Err("constant field did not normalize to zeros".into());
        }
        for axis in AXES {
            let p = project(&res.normalized, axis).values;
            for t in 0..grid.dims()[axis.index()] {
                let s = slice(&res.normalized, axis, t).map_err(|e| e.to_string())?;
                if s.values.iter().zip(&p.values).any(|(a, b)| a > b) {
                    return Err(format!("slice {}={t} exceeds the projection", axis.as_str()));
                }
            }
        }
        let bands = rank_bands(&res.normalized, grid).map_err(|e| e.to_string())?;
        let sizes = bands.band_sizes();
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if max - min > 1 {
            return Err(format!("band sizes {sizes:?} differ by more than 1"));
        }
        if sizes.iter().sum::<usize>() != grid.occupied_count() {
            return Err("bands do not cover the occupied voxels".into());
        }
    }
    for (a, s) in abs.importance.data.iter().zip(&sq.importance.data) {
        if (a * a - s).abs() > 1e-15 * s.max(1.0) {
            return Err(format!("square {s} != abs^2 {}", a * a));
        }
    }
    Ok(())
}
