//! Triangle mesh to occupancy grid.
//!
//! The grid spans the unit domain `[-0.5, 0.5]^3`. Surface cells are those whose
//! closed box meets a triangle, where a triangle lying exactly on a plane between
//! two cells is assigned to the lower cell (cells are treated as `(lo, hi]`, the
//! first cell as `[lo, hi]`). Interior cells come from voxel-center ray parity
//! along +x, +y and +z, majority-voted.

use super::grid::{ValueKind, VoxelGrid};
use super::mesh::{Point3, TriangleMesh};
use super::standardize::{cross, dot, sub};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillMode {
    Surface,
    Solid,
}

impl std::str::FromStr for FillMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "surface" => Ok(FillMode::Surface),
            "solid" => Ok(FillMode::Solid),
            _ => Err(Error::Argument(format!("unknown fill mode `{s}`"))),
        }
    }
}

/// Fraction of voxels allowed to disagree across the three ray directions.
pub const WATERTIGHT_TOLERANCE: f64 = 0.005;

pub fn voxelize(mesh: &TriangleMesh, resolution: usize, fill: FillMode) -> Result<VoxelGrid> {
    if resolution < 2 {
        return Err(Error::Argument(format!("resolution must be >= 2, got {resolution}")));
    }
    if mesh.triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let mut grid = VoxelGrid::zeros([resolution; 3], ValueKind::Occupancy)?;
    let domain = Domain::unit(resolution);
    mark_surface(mesh, &domain, &mut grid);
    if fill == FillMode::Solid {
        let inside = interior_cells(mesh, &domain)?;
        for (idx, inside) in inside.into_iter().enumerate() {
            if inside {
                let [i, j, k] = domain.unflatten(idx);
                grid.set(i, j, k, 1.0);
            }
        }
    }
    Ok(grid)
}

struct Domain {
    n: usize,
    origin: f64,
    size: f64,
}

impl Domain {
    fn unit(n: usize) -> Self {
        Domain {
            n,
            origin: -0.5,
            size: 1.0 / n as f64,
        }
    }

    fn center(&self, c: usize) -> f64 {
        self.origin + (c as f64 + 0.5) * self.size
    }

    /// Cell holding coordinate `t` under the `(lo, hi]` convention, clamped.
    fn cell_of(&self, t: f64) -> usize {
        let c = ((t - self.origin) / self.size).ceil() - 1.0;
        c.clamp(0.0, (self.n - 1) as f64) as usize
    }

    fn unflatten(&self, idx: usize) -> [usize; 3] {
        [idx / (self.n * self.n), (idx / self.n) % self.n, idx % self.n]
    }

    fn flatten(&self, c: [usize; 3]) -> usize {
        (c[0] * self.n + c[1]) * self.n + c[2]
    }
}

fn mark_surface(mesh: &TriangleMesh, domain: &Domain, grid: &mut VoxelGrid) {
    let half = 0.5 * domain.size;
    // touching contacts survive floating-point noise in the separating-axis sums
    let slack = 1e-12 * domain.size;
    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle(t);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut outside = false;
        for a in 0..3 {
            let mn = tri.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            let mx = tri.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
            if mx < -0.5 || mn > 0.5 {
                outside = true;
                break;
            }
            lo[a] = domain.cell_of(mn);
            hi[a] = domain.cell_of(mx);
        }
        if outside {
            continue;
        }
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    let c = [domain.center(i), domain.center(j), domain.center(k)];
                    if triangle_box_overlap(&tri, c, half + slack) {
                        grid.set(i, j, k, 1.0);
                    }
                }
            }
        }
    }
}

/// Separating-axis test of a triangle against a cube; touching counts as overlap.
pub(crate) fn triangle_box_overlap(tri: &[Point3; 3], center: Point3, half: f64) -> bool {
    let v = tri.map(|p| sub(p, center));
    let e = [sub(v[1], v[0]), sub(v[2], v[1]), sub(v[0], v[2])];

    for a in 0..3 {
        let mn = v[0][a].min(v[1][a]).min(v[2][a]);
        let mx = v[0][a].max(v[1][a]).max(v[2][a]);
        if mn > half || mx < -half {
            return false;
        }
    }

    let normal = cross(e[0], e[1]);
    let d = dot(normal, v[0]);
    let r = half * (normal[0].abs() + normal[1].abs() + normal[2].abs());
    if d.abs() > r {
        return false;
    }

    for edge in &e {
        for a in 0..3 {
            let mut axis = [0.0; 3];
            axis[a] = 1.0;
            let ax = cross(*edge, axis);
            if ax == [0.0; 3] {
                continue;
            }
            let p = v.map(|q| dot(q, ax));
            let mn = p[0].min(p[1]).min(p[2]);
            let mx = p[0].max(p[1]).max(p[2]);
            let r = half * (ax[0].abs() + ax[1].abs() + ax[2].abs());
            if mn > r || mx < -r {
                return false;
            }
        }
    }
    true
}

/// Majority-voted voxel-center parity, one flag per cell in linear order.
fn interior_cells(mesh: &TriangleMesh, domain: &Domain) -> Result<Vec<bool>> {
    let n = domain.n;
    let total = n * n * n;
    let votes: Vec<Vec<bool>> = (0..3).map(|axis| parity_along(mesh, domain, axis)).collect();
    let mut inside = vec![false; total];
    let mut inconsistent = 0;
    for idx in 0..total {
        let count = votes.iter().filter(|v| v[idx]).count();
        if count != 0 && count != 3 {
            inconsistent += 1;
        }
        inside[idx] = count >= 2;
    }
    if inconsistent as f64 > WATERTIGHT_TOLERANCE * total as f64 {
        return Err(Error::NotWatertight {
            inconsistent,
            total,
        });
    }
    Ok(inside)
}

/// Edge function of `p` against the directed edge `a -> b`, evaluated in a
/// canonical vertex order so that the two triangles sharing an edge get exactly
/// negated values.
fn edge_fn(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let orient = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    if (a[0], a[1]) <= (b[0], b[1]) {
        orient(a, b)
    } else {
        -orient(b, a)
    }
}

/// Tie rule for points exactly on an edge: exactly one of `d` and `-d` owns it.
fn owns_edge(a: [f64; 2], b: [f64; 2]) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    d[1] > 0.0 || (d[1] == 0.0 && d[0] < 0.0)
}

fn parity_along(mesh: &TriangleMesh, domain: &Domain, axis: usize) -> Vec<bool> {
    let n = domain.n;
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); n * n];

    for t in 0..mesh.triangles.len() {
        let tri = mesh.triangle(t);
        let mut p2 = tri.map(|p| [p[u], p[v]]);
        let mut depth = tri.map(|p| p[axis]);
        let area = edge_fn(p2[0], p2[1], p2[2]);
        if area == 0.0 {
            continue;
        }
        if area < 0.0 {
            p2.swap(1, 2);
            depth.swap(1, 2);
        }
        let range = |c: usize| {
            let mn = p2.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
            let mx = p2.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
            let lo = ((mn - domain.origin) / domain.size - 0.5).ceil().max(0.0);
            let hi = ((mx - domain.origin) / domain.size - 0.5).floor().min((n - 1) as f64);
            (lo as i64, hi as i64)
        };
        let (ulo, uhi) = range(0);
        let (vlo, vhi) = range(1);
        for cu in ulo..=uhi {
            for cv in vlo..=vhi {
                let q = [domain.center(cu as usize), domain.center(cv as usize)];
                let mut w = [0.0; 3];
                let mut hit = true;
                for e in 0..3 {
                    let a = p2[(e + 1) % 3];
                    let b = p2[(e + 2) % 3];
                    w[e] = edge_fn(a, b, q);
                    if w[e] < 0.0 || (w[e] == 0.0 && !owns_edge(a, b)) {
                        hit = false;
                        break;
                    }
                }
                if hit {
                    let sum = w[0] + w[1] + w[2];
                    let z = (w[0] * depth[0] + w[1] * depth[1] + w[2] * depth[2]) / sum;
                    hits[cu as usize * n + cv as usize].push(z);
                }
            }
        }
    }

    let mut inside = vec![false; n * n * n];
    for (col, list) in hits.iter_mut().enumerate() {
        if list.is_empty() {
            continue;
        }
        list.sort_by(f64::total_cmp);
        let (cu, cv) = (col / n, col % n);
        let mut passed = 0;
        for c in 0..n {
            let x = domain.center(c);
            while passed < list.len() && list[passed] <= x {
                passed += 1;
            }
            if (list.len() - passed) % 2 == 1 {
                let mut cell = [0usize; 3];
                cell[axis] = c;
                cell[u] = cu;
                cell[v] = cv;
                inside[domain.flatten(cell)] = true;
            }
        }
    }
    inside
}
