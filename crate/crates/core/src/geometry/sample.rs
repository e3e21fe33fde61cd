use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeometryError, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
    pub face: usize,
    /// Share of the surface area this sample stands for (mm²).
    pub weight: f64,
}

/// Area-uniform samples: faces are drawn proportionally to area by stratified
/// sampling of the area CDF (one draw per `1/count` slice), points uniformly
/// inside each face. Deterministic for a given seed.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<Vec<SurfaceSample>, GeometryError> {
    if mesh.face_count() == 0 {
        return Err(GeometryError::EmptyMesh);
    }
    if count == 0 {
        return Err(GeometryError::InvalidParameter(
            "sample count must be at least 1".into(),
        ));
    }
    let mut cdf = Vec::with_capacity(mesh.face_count());
    let mut acc = 0.0;
    for &a in mesh.face_areas() {
        acc += a;
        cdf.push(acc);
    }
    let total = acc;
    let weight = total / count as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|k| {
            let r = (k as f64 + rng.random::<f64>()) * weight;
            let face = cdf.partition_point(|&c| c <= r).min(cdf.len() - 1);
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let s = u1.sqrt();
            let [a, b, c] = mesh.triangle(face);
            let point = Point3::from(a.coords * (1.0 - s) + b.coords * (s * (1.0 - u2)) + c.coords * (s * u2));
            SurfaceSample {
                point,
                normal: mesh.face_normals()[face],
                face,
                weight,
            }
        })
        .collect();
    Ok(samples)
}

/// Samples at (at least) `density` points per mm².
pub fn sample_surface_density(
    mesh: &TriangleMesh,
    density: f64,
    seed: u64,
) -> Result<Vec<SurfaceSample>, GeometryError> {
    if !(density > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "sample density {density} must be positive"
        )));
    }
    let count = (mesh.surface_area() * density).ceil().max(1.0) as usize;
    sample_surface(mesh, count, seed)
}
