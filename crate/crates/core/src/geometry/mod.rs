//! Mesh input, standardization and voxelization.

mod grid;
mod mesh;
mod standardize;
mod voxelize;
mod vxg;

pub use grid::{ValueKind, VoxelGrid};
pub use mesh::{box_mesh, parse_mesh, MeshFormat, Point3, TriangleMesh};
pub use standardize::{standardize, triangle_area, StandardizationReport, MIN_TRIANGLE_AREA};
pub use voxelize::{voxelize, FillMode, WATERTIGHT_TOLERANCE};
pub use vxg::{read_voxel_file, write_voxel_file};
