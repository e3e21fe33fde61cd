//! Triangle meshes and the spatial machinery built on them: BVH queries,
//! surface sampling, solid voxelization and depth/instance rendering.
//!
//! All coordinates are millimetres.

mod bvh;
pub mod io;
mod kdtree;
mod mesh;
pub mod primitives;
mod render;
mod sample;
mod voxel;

use thiserror::Error;

pub use bvh::{closest_point_on_triangle, ray_triangle, ClosestHit, MeshBVH, PosedMesh, RayHit, BVH_LEAF_SIZE};
pub use kdtree::PointIndex;
pub use mesh::{Aabb, TriangleMesh, MIN_FACE_AREA};
pub use render::{render_depth, render_posed, Camera, DepthMap, InstanceMap};
pub use sample::{sample_surface, sample_surface_density, SurfaceSample};
pub use voxel::{voxelize_solid, GridSpec, VoxelGrid};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references a vertex beyond the {vertex_count} available")]
    IndexOutOfRange { face: usize, vertex_count: usize },
    #[error("face {face} is degenerate (area {area:e} mm²)")]
    DegenerateFace { face: usize, area: f64 },
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("non-finite geometry: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
