//! Geometry round-trip and voxelization checks shared with the acceptance harness.
#![allow(dead_code)]

use archshape::geometry::{box_mesh, read_voxel_file, standardize, voxelize, write_voxel_file, FillMode};
use archshape::model::{build_model, load_checkpoint, save_checkpoint, ArchConfig};
use archshape::{Tensor, TriangleMesh, ValueKind, VoxelGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// A cube filling the unit domain voxelizes to a completely occupied grid.
pub fn unit_cube_solid_full() -> Check {
    for r in 2..=16 {
        let g = voxelize(&box_mesh([-0.5; 3], [0.5; 3]), r, FillMode::Solid).map_err(|e| e.to_string())?;
        ensure(g.occupied_count() == r * r * r, || format!("resolution {r}: {} of {}", g.occupied_count(), r * r * r))?;
    }
    Ok("resolutions 2..=16 fully occupied".into())
}

/// A box over the lower half of the first axis fills exactly the lower half at resolution 4.
pub fn half_domain_box() -> Check {
    let g = voxelize(&box_mesh([-0.5; 3], [0.0, 0.5, 0.5]), 4, FillMode::Solid).map_err(|e| e.to_string())?;
    ensure(g.occupied_count() == 32, || format!("{} occupied, want 32", g.occupied_count()))?;
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                let want = if i < 2 { 1.0 } else { 0.0 };
                ensure(g.get(i, j, k) == want, || format!("cell ({i},{j},{k})"))?;
            }
        }
    }
    Ok("32 of 64 cells, all with i < 2".into())
}

fn random_grid(rng: &mut ChaCha8Rng) -> VoxelGrid {
    let dims = [rng.gen_range(1..=9), rng.gen_range(1..=9), rng.gen_range(1..=9)];
    let n = dims.iter().product();
    if rng.gen_bool(0.5) {
        let data = (0..n).map(|_| rng.gen_range(0..2) as f32).collect();
        VoxelGrid::from_data(dims, ValueKind::Occupancy, data).unwrap()
    } else {
        let data = (0..n).map(|_| f32::from_bits(rng.gen_range(0..0x7f00_0000u32)) * if rng.gen() { 1.0 } else { -1.0 }).collect();
        VoxelGrid::from_data(dims, ValueKind::Scalar, data).unwrap()
    }
}

/// write -> read -> write reproduces both the grid and the bytes.
pub fn vxg_round_trip(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..cases {
        let g = random_grid(&mut rng);
        let bytes = write_voxel_file(&g);
        let back = read_voxel_file(&bytes).map_err(|e| format!("case {c}: {e}"))?;
        let same_bits = back.data().iter().zip(g.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(back.dims() == g.dims() && back.kind() == g.kind() && same_bits, || format!("case {c}: grid differs"))?;
        ensure(write_voxel_file(&back) == bytes, || format!("case {c}: bytes differ"))?;
    }
    Ok(format!("{cases} grids"))
}

/// Checkpoints with trained running statistics survive save -> load -> save bitwise.
pub fn asn1_round_trip(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for c in 0..cases {
        let r = [4, 8, 16][rng.gen_range(0..3)];
        let max_blocks = match r {
            4 => 2,
            8 => 3,
            _ => 4,
        };
        let blocks = rng.gen_range(1..=max_blocks);
        let channels = (0..blocks).map(|_| rng.gen_range(1..=4)).collect();
        let classes = rng.gen_range(2..=3);
        let mut m = build_model(ArchConfig::new(r, channels, classes).unwrap(), rng.gen()).unwrap();
        if rng.gen_bool(0.5) {
            let n = 2;
            let data = (0..n * r * r * r).map(|_| rng.gen_range(0..2) as f64).collect();
            m.forward_train(&Tensor::from_vec(&[n, 1, r, r, r], data).unwrap()).unwrap();
            m.epochs_completed = rng.gen_range(1..100);
        }
        let bytes = save_checkpoint(&m);
        let back = load_checkpoint(&bytes).map_err(|e| format!("case {c}: {e}"))?;
        ensure(back == m, || format!("case {c}: model differs"))?;
        ensure(save_checkpoint(&back) == bytes, || format!("case {c}: bytes differ"))?;
    }
    Ok(format!("{cases} checkpoints"))
}

fn random_mesh(rng: &mut ChaCha8Rng) -> TriangleMesh {
    if rng.gen_bool(0.5) {
        let lo: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-50.0..50.0));
        let hi: [f64; 3] = std::array::from_fn(|a| lo[a] + rng.gen_range(0.01..30.0));
        box_mesh(lo, hi)
    } else {
        let n = rng.gen_range(3..20);
        let vertices = (0..n)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-1e3..1e3)))
            .collect();
        let triangles = (0..rng.gen_range(1..15))
            .map(|t| [t % n, (t + 1) % n, (t + 2) % n])
            .collect();
        TriangleMesh::new("soup", vertices, triangles).unwrap()
    }
}

/// Standardizing an already standard mesh moves no vertex by more than 1e-12.
pub fn standardize_idempotent(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for c in 0..cases {
        let (once, _) = standardize(&random_mesh(&mut rng)).map_err(|e| format!("case {c}: {e}"))?;
        let (twice, rep) = standardize(&once).map_err(|e| format!("case {c}: {e}"))?;
        ensure(once.triangles == twice.triangles, || format!("case {c}: triangles changed"))?;
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            for k in 0..3 {
                worst = worst.max((a[k] - b[k]).abs());
            }
        }
        worst = worst.max((rep.applied_scale - 1.0).abs());
        ensure(worst <= 1e-12, || format!("case {c}: deviation {worst:e}"))?;
    }
    Ok(format!("{cases} meshes, max deviation {worst:e}"))
}
