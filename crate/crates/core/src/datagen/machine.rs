//! Parametric stacked-slab massings: the "machine" family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{ValueKind, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacadeType {
    /// Every unit has the same footprint.
    Flat,
    /// Each unit is inset one voxel per side relative to the one below.
    Stepped,
    /// Each unit is offset one voxel along `j` relative to the one below.
    Sheared,
}

impl FacadeType {
    pub const ALL: [FacadeType; 3] = [FacadeType::Flat, FacadeType::Stepped, FacadeType::Sheared];
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineFormSpec {
    pub unit_count: usize,
    /// Share of the footprint rows (along `j`) each slab fills, in (0, 1].
    pub fill_coefficient: f64,
    pub facade_type: FacadeType,
    /// Share of the slab area removed by the central core, in [0, 0.5].
    pub core_fraction: f64,
    /// In [-45, 45]; realized as an integer `k` offset per level.
    pub rotation_shear_deg: f64,
    pub seed: u64,
}

impl MachineFormSpec {
    pub fn validate(&self) -> Result<()> {
        if self.unit_count == 0 {
            return Err(Error::Argument("unit_count must be >= 1".into()));
        }
        if !(self.fill_coefficient > 0.0 && self.fill_coefficient <= 1.0) {
            return Err(Error::Argument(format!("fill_coefficient {} outside (0, 1]", self.fill_coefficient)));
        }
        if !(0.0..=0.5).contains(&self.core_fraction) {
            return Err(Error::Argument(format!("core_fraction {} outside [0, 0.5]", self.core_fraction)));
        }
        if !(-45.0..=45.0).contains(&self.rotation_shear_deg) {
            return Err(Error::Argument(format!(
                "rotation_shear_deg {} outside [-45, 45]",
                self.rotation_shear_deg
            )));
        }
        Ok(())
    }
}

/// Half-open box `lo..hi` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cuboid {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Cuboid {
    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= p[a] && p[a] < self.hi[a])
    }

    pub fn volume(&self) -> usize {
        (0..3).map(|a| self.hi[a].saturating_sub(self.lo[a])).product()
    }
}

/// Per-level occupied rectangle and carved core of a machine form.
#[derive(Debug, Clone, PartialEq)]
pub struct MachinePlan {
    pub resolution: usize,
    /// Footprint of the full-fill slab before facade and shear adjustments: `[j, k]` extents.
    pub footprint: [usize; 2],
    /// One entry per occupied level `i`, bottom up: `(j_lo, j_hi, k_lo, k_hi)`.
    pub levels: Vec<[usize; 4]>,
    /// Core hole per level, same convention; empty ranges when there is no core.
    pub cores: Vec<[usize; 4]>,
}

fn shear_offset(level: usize, deg: f64) -> i64 {
    (level as f64 * deg.to_radians().tan() * 0.5).round() as i64
}

pub fn plan_machine_form(spec: &MachineFormSpec, resolution: usize) -> Result<MachinePlan> {
    spec.validate()?;
    if resolution < 4 {
        return Err(Error::Argument(format!("resolution {resolution} too small for a form (need >= 4)")));
    }
    let r = resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let wj = rng.gen_range(r / 2..=r - 2);
    let wk = rng.gen_range(r / 2..=r - 2);
    let height = rng.gen_range(r / 2..=r - r / 8);
    let unit_h = (height / spec.unit_count).max(1);
    let n_levels = (unit_h * spec.unit_count).min(r);

    let rows = ((spec.fill_coefficient * wj as f64).round() as usize).clamp(1, wj);
    let offs: Vec<i64> = (0..n_levels).map(|l| shear_offset(l, spec.rotation_shear_deg)).collect();
    let (min_off, max_off) = (*offs.iter().min().unwrap(), *offs.iter().max().unwrap());
    let span = (max_off - min_off) as usize;
    let wk = wk.min(r.saturating_sub(span)).max(1);
    let k_base = ((r - (wk + span)) / 2) as i64 - min_off;

    let mut levels = Vec::with_capacity(n_levels);
    let mut cores = Vec::with_capacity(n_levels);
    let side = spec.core_fraction.sqrt();
    for (l, off) in offs.iter().enumerate() {
        let unit = l / unit_h;
        let (mut j_len, mut k_len) = (rows, wk);
        let mut j_lo = (r - rows) / 2;
        let mut k_lo = (k_base + off) as usize;
        match spec.facade_type {
            FacadeType::Flat => {}
            FacadeType::Stepped => {
                let inset = unit.min((j_len - 1) / 2).min((k_len - 1) / 2);
                j_lo += inset;
                k_lo += inset;
                j_len -= 2 * inset;
                k_len -= 2 * inset;
            }
            FacadeType::Sheared => {
                let room = r - j_len - j_lo;
                j_lo += unit.min(room);
            }
        }
        levels.push([j_lo, j_lo + j_len, k_lo, k_lo + k_len]);
        let cj = (side * j_len as f64).round() as usize;
        let ck = (side * k_len as f64).round() as usize;
        if cj > 0 && ck > 0 && cj < j_len && ck < k_len {
            let cj_lo = j_lo + (j_len - cj) / 2;
            let ck_lo = k_lo + (k_len - ck) / 2;
            cores.push([cj_lo, cj_lo + cj, ck_lo, ck_lo + ck]);
        } else {
            cores.push([0, 0, 0, 0]);
        }
    }
    Ok(MachinePlan {
        resolution: r,
        footprint: [wj, wk],
        levels,
        cores,
    })
}

pub fn rasterize_machine(plan: &MachinePlan) -> Result<VoxelGrid> {
    let r = plan.resolution;
    let mut grid = VoxelGrid::zeros([r, r, r], ValueKind::Occupancy)?;
    for (i, (lv, core)) in plan.levels.iter().zip(&plan.cores).enumerate() {
        for j in lv[0]..lv[1] {
            for k in lv[2]..lv[3] {
                let in_core = (core[0]..core[1]).contains(&j) && (core[2]..core[3]).contains(&k);
                if !in_core {
                    grid.set(i, j, k, 1.0);
                }
            }
        }
    }
    if grid.occupied_count() == 0 {
        return Err(Error::EmptyForm);
    }
    Ok(grid)
}

pub fn gen_machine_form(spec: &MachineFormSpec, resolution: usize) -> Result<VoxelGrid> {
    rasterize_machine(&plan_machine_form(spec, resolution)?)
}
