use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SceneGenError;
use crate::geometry::{Aabb, Camera, PosedMesh};

/// Viewpoints on a sphere around the scene, looking at its centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSampler {
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
    /// Camera distance as a multiple of the scene bounding-sphere radius.
    pub radius_factor: f64,
    pub views: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraSampler {
    fn default() -> Self {
        Self {
            azimuth: (0.0, TAU),
            elevation: (FRAC_PI_4, FRAC_PI_2),
            radius_factor: 2.5,
            views: 10,
            width: 160,
            height: 120,
        }
    }
}

impl CameraSampler {
    pub fn validate(&self) -> Result<(), SceneGenError> {
        let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if !ordered(self.azimuth) || !ordered(self.elevation) {
            return Err(SceneGenError::InvalidParameter(
                "angle ranges must be finite with min <= max".into(),
            ));
        }
        if !(self.radius_factor > 1.0) {
            return Err(SceneGenError::InvalidParameter(
                "camera radius must exceed the bounding sphere".into(),
            ));
        }
        if self.views == 0 || self.width == 0 || self.height == 0 {
            return Err(SceneGenError::InvalidParameter(
                "views and image size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Centre and radius of a sphere enclosing every vertex.
pub fn bounding_sphere(scene: &[PosedMesh]) -> (Point3<f64>, f64) {
    let b = scene.iter().fold(Aabb::empty(), |acc, p| acc.merge(&p.bounding_box()));
    let c = b.center();
    let r = scene
        .iter()
        .flat_map(|p| {
            p.world_mesh()
                .vertices()
                .iter()
                .map(|v| (v - c).norm())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    (c, r)
}

/// `sampler.views` cameras with uniform azimuth and elevation. The focal
/// length frames the bounding sphere in the shorter image side.
pub fn sample_cameras(scene: &[PosedMesh], sampler: &CameraSampler, seed: u64) -> Result<Vec<Camera>, SceneGenError> {
    sampler.validate()?;
    if scene.is_empty() {
        return Err(SceneGenError::InvalidParameter("cannot frame an empty scene".into()));
    }
    let (centre, r) = bounding_sphere(scene);
    let r = r.max(1.0);
    let dist = sampler.radius_factor * r;
    let half = (r / dist).asin();
    let focal = 0.5 * sampler.width.min(sampler.height) as f64 / half.tan();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sampler.views)
        .map(|_| {
            let az = rng.random_range(sampler.azimuth.0..=sampler.azimuth.1);
            let el = rng.random_range(sampler.elevation.0..=sampler.elevation.1);
            let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            Ok(Camera::look_at(
                centre + dir * dist,
                centre,
                Vector3::z(),
                focal,
                sampler.width,
                sampler.height,
            )?)
        })
        .collect()
}
