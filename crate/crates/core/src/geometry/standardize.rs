use super::mesh::{Point3, TriangleMesh};
use crate::error::{Error, Result};

/// Triangles with area at or below this (after rescaling to the unit box) are dropped.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationReport {
    pub applied_scale: f64,
    pub applied_translation: [f64; 3],
    pub dropped_elements: usize,
}

/// Centers the bounding box on the origin and scales its longest edge to 1.
///
/// The transform is `p' = (p + translation) * scale`. Orientation is left as is.
pub fn standardize(mesh: &TriangleMesh) -> Result<(TriangleMesh, StandardizationReport)> {
    if mesh.triangles.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (lo, hi) = mesh.bounds();
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if !(extent > 0.0) {
        return Err(Error::DegenerateGeometry(
            "bounding box has zero extent on every axis".into(),
        ));
    }
    let scale = 1.0 / extent;
    let translation: [f64; 3] = std::array::from_fn(|a| -(lo[a] + 0.5 * (hi[a] - lo[a])));
    let vertices: Vec<Point3> = mesh
        .vertices
        .iter()
        .map(|p| std::array::from_fn(|a| (p[a] + translation[a]) * scale))
        .collect();

    let mut triangles = Vec::with_capacity(mesh.triangles.len());
    let mut dropped = mesh.dropped_degenerate;
    for t in &mesh.triangles {
        if triangle_area(&t.map(|i| vertices[i])) <= MIN_TRIANGLE_AREA {
            dropped += 1;
        } else {
            triangles.push(*t);
        }
    }
    if triangles.is_empty() {
        return Err(Error::DegenerateGeometry("every triangle has zero area".into()));
    }
    let out = TriangleMesh {
        name: mesh.name.clone(),
        vertices,
        triangles,
        dropped_degenerate: 0,
    };
    Ok((
        out,
        StandardizationReport {
            applied_scale: scale,
            applied_translation: translation,
            dropped_elements: dropped,
        },
    ))
}

pub fn triangle_area(t: &[Point3; 3]) -> f64 {
    let u = sub(t[1], t[0]);
    let v = sub(t[2], t[0]);
    let c = cross(u, v);
    0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
