//! Articulated composite massings: the "human" family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::machine::Cuboid;
use crate::error::{Error, Result};
use crate::geometry::{ValueKind, VoxelGrid};

/// Attempts before a human form is declared ungeneratable.
pub const MAX_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct HumanFormSpec {
    /// In [2, 6].
    pub base_masses: usize,
    /// Full-height shafts (courtyards, light wells); >= 1.
    pub subtraction_count: usize,
    /// Levels above which the outer ring is stripped.
    pub setback_levels: usize,
    /// In [0, 1]; scales the spread of mass heights.
    pub asymmetry: f64,
    pub seed: u64,
}

impl HumanFormSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.base_masses) {
            return Err(Error::Argument(format!("base_masses {} outside [2, 6]", self.base_masses)));
        }
        if self.subtraction_count == 0 {
            return Err(Error::Argument("subtraction_count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.asymmetry) {
            return Err(Error::Argument(format!("asymmetry {} outside [0, 1]", self.asymmetry)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanPlan {
    pub resolution: usize,
    /// Grounded masses; each overlaps the footprint of the one before.
    pub boxes: Vec<Cuboid>,
    /// Removed after the union.
    pub shafts: Vec<Cuboid>,
    /// Each level at or above one of these loses one outer ring.
    pub setbacks: Vec<usize>,
}

/// Draws one candidate layout; `rng` advances so retries differ.
pub fn plan_human_form(spec: &HumanFormSpec, resolution: usize, rng: &mut impl Rng) -> Result<HumanPlan> {
    spec.validate()?;
    if resolution < 8 {
        return Err(Error::Argument(format!("resolution {resolution} too small for a human form (need >= 8)")));
    }
    let r = resolution;
    let h_max = rng.gen_range(r / 2..=r - 2);
    let height = |rng: &mut dyn rand::RngCore| {
        let u: f64 = rng.gen();
        ((h_max as f64 * (1.0 - 0.75 * spec.asymmetry * u)).round() as usize).clamp(2, r - 2)
    };
    let mut boxes: Vec<Cuboid> = Vec::with_capacity(spec.base_masses);
    for b in 0..spec.base_masses {
        let (lo_s, hi_s) = if b == 0 { (r / 4, r / 2) } else { ((r / 6).max(2), r / 2) };
        let size = [rng.gen_range(lo_s..=hi_s), rng.gen_range(lo_s..=hi_s)];
        let anchor = match boxes.last() {
            None => {
                let c = r / 2;
                let wobble = ((r / 4) as f64 * spec.asymmetry).round() as i64;
                [0, 1].map(|_| (c as i64 + rng.gen_range(-wobble..=wobble)).clamp(1, r as i64 - 2) as usize)
            }
            Some(prev) => [1, 2].map(|a| rng.gen_range(prev.lo[a]..prev.hi[a])),
        };
        let mut lo = [0usize; 3];
        let mut hi = [height(rng), 0, 0];
        for a in 0..2 {
            let s = size[a];
            let from = (anchor[a] + 1).saturating_sub(s).max(1);
            let to = anchor[a].min(r - 1 - s);
            lo[a + 1] = rng.gen_range(from..=to);
            hi[a + 1] = lo[a + 1] + s;
        }
        boxes.push(Cuboid { lo, hi });
    }

    let side_max = (r / 10).max(1);
    let mut shafts = Vec::with_capacity(spec.subtraction_count);
    for _ in 0..spec.subtraction_count {
        let s = [rng.gen_range(1..=side_max), rng.gen_range(1..=side_max)];
        let host = boxes[rng.gen_range(0..boxes.len())];
        let fits = (0..2).all(|a| host.hi[a + 1] - host.lo[a + 1] >= s[a] + 2);
        if !fits {
            continue;
        }
        let mut lo = [0usize; 3];
        let mut hi = [r, 0, 0];
        for a in 0..2 {
            lo[a + 1] = rng.gen_range(host.lo[a + 1] + 1..=host.hi[a + 1] - 1 - s[a]);
            hi[a + 1] = lo[a + 1] + s[a];
        }
        shafts.push(Cuboid { lo, hi });
    }
    let mut setbacks: Vec<usize> = (0..spec.setback_levels).map(|_| rng.gen_range(r / 4..r - 1)).collect();
    setbacks.sort_unstable();
    Ok(HumanPlan {
        resolution: r,
        boxes,
        shafts,
        setbacks,
    })
}

/// Removes every occupied cell of level `i` with an empty 4-neighbour in the `j, k` plane.
fn erode_level(grid: &mut VoxelGrid, i: usize) {
    let [_, h, w] = grid.dims();
    let mut strip = Vec::new();
    for j in 0..h {
        for k in 0..w {
            if grid.get(i, j, k) == 0.0 {
                continue;
            }
            let edge = j == 0
                || k == 0
                || j + 1 == h
                || k + 1 == w
                || grid.get(i, j - 1, k) == 0.0
                || grid.get(i, j + 1, k) == 0.0
                || grid.get(i, j, k - 1) == 0.0
                || grid.get(i, j, k + 1) == 0.0;
            if edge {
                strip.push([i, j, k]);
            }
        }
    }
    for p in strip {
        grid.set(p[0], p[1], p[2], 0.0);
    }
}

pub fn rasterize_human(plan: &HumanPlan) -> Result<VoxelGrid> {
    let r = plan.resolution;
    let mut grid = VoxelGrid::zeros([r, r, r], ValueKind::Occupancy)?;
    for set_to in [1.0, 0.0] {
        let parts = if set_to == 1.0 { &plan.boxes } else { &plan.shafts };
        for b in parts {
            for i in b.lo[0]..b.hi[0].min(r) {
                for j in b.lo[1]..b.hi[1] {
                    for k in b.lo[2]..b.hi[2] {
                        grid.set(i, j, k, set_to);
                    }
                }
            }
        }
    }
    for i in 0..r {
        let rings = plan.setbacks.iter().filter(|l| **l <= i).count();
        for _ in 0..rings {
            erode_level(&mut grid, i);
        }
    }
    Ok(grid)
}

/// True when the occupied voxels form exactly one face-connected component.
pub fn is_six_connected(grid: &VoxelGrid) -> bool {
    let dims = grid.dims();
    let Some(start) = grid.data().iter().position(|v| *v != 0.0) else {
        return false;
    };
    let mut seen = vec![false; grid.len()];
    seen[start] = true;
    let mut stack = vec![start];
    let mut reached = 1;
    let (hw, w) = (dims[1] * dims[2], dims[2]);
    while let Some(at) = stack.pop() {
        let p = [at / hw, at / w % dims[1], at % w];
        for a in 0..3 {
            for up in [false, true] {
                let mut q = p;
                if up {
                    if q[a] + 1 == dims[a] {
                        continue;
                    }
                    q[a] += 1;
                } else {
                    if q[a] == 0 {
                        continue;
                    }
                    q[a] -= 1;
                }
                let idx = grid.index(q[0], q[1], q[2]);
                if !seen[idx] && grid.data()[idx] != 0.0 {
                    seen[idx] = true;
                    reached += 1;
                    stack.push(idx);
                }
            }
        }
    }
    reached == grid.occupied_count()
}

pub fn gen_human_form(spec: &HumanFormSpec, resolution: usize) -> Result<VoxelGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..MAX_ATTEMPTS {
        let grid = rasterize_human(&plan_human_form(spec, resolution, &mut rng)?)?;
        if is_six_connected(&grid) {
            return Ok(grid);
        }
    }
    Err(Error::Generation(format!(
        "no single connected human form after {MAX_ATTEMPTS} attempts (seed {})",
        spec.seed
    )))
}
