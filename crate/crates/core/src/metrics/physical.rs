use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::geometry::{sample_surface, voxelize_solid, Aabb, PosedMesh, VoxelGrid};
use crate::pose::Similarity;

/// Points closer than this to another surface count as lying on it (mm).
const SURFACE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// Surface within this distance of another object is in contact (mm).
    pub contact_threshold: f64,
    /// Area-weighted surface samples per mm².
    pub samples_per_mm2: f64,
    /// Voxel edge for the penetration broad phase (mm).
    pub voxel_size: f64,
    pub seed: u64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            contact_threshold: 2.5,
            samples_per_mm2: 4.0,
            voxel_size: 1.0,
            seed: 0,
        }
    }
}

impl ContactConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.contact_threshold >= 0.0 && self.samples_per_mm2 > 0.0 && self.voxel_size > 0.0) {
            return Err(MetricError::InvalidParameter(
                "contact threshold must be non-negative; density and voxel size positive".into(),
            ));
        }
        Ok(())
    }
}

/// Area of one object's surface meeting a criterion with respect to the others.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaTotals {
    /// Surface of each object meeting the criterion against any other object.
    pub per_object: Vec<f64>,
    /// `(i, j, area of i near j + area of j near i)` for `i < j`.
    pub per_pair: Vec<(usize, usize, f64)>,
    /// Sum of `per_object`: each surface point counted once.
    pub total: f64,
    /// Sum of `per_pair`.
    pub pairwise_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairArea {
    pub i: usize,
    pub j: usize,
    pub contact: f64,
    pub penetration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactReport {
    pub contact_area: f64,
    pub penetration_area: f64,
    /// `penetration_area / contact_area`; `None` without contact.
    pub ratio: Option<f64>,
    pub contact_area_pairwise: f64,
    pub penetration_area_pairwise: f64,
    pub per_object_contact: Vec<f64>,
    pub per_object_penetration: Vec<f64>,
    pub per_pair: Vec<PairArea>,
    pub config: ContactConfig,
}

/// Area-uniform world samples of a posed mesh at `density` per world mm².
fn world_samples(obj: &PosedMesh, density: f64, seed: u64) -> Result<Vec<(Point3<f64>, f64)>, MetricError> {
    let area = obj.surface_area();
    let count = (area * density).ceil().max(1.0) as usize;
    let w = area / count as f64;
    Ok(sample_surface(obj.mesh(), count, seed)?
        .into_iter()
        .map(|s| (obj.pose().apply(&s.point), w))
        .collect())
}

fn accumulate<F>(scene: &[PosedMesh], density: f64, seed: u64, hits: F) -> Result<AreaTotals, MetricError>
where
    F: Fn(&Point3<f64>, usize) -> bool + Sync,
{
    let n = scene.len();
    let per: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut pair = vec![0.0; n];
            let mut any = 0.0;
            if n < 2 {
                return Ok((any, pair));
            }
            for (p, w) in world_samples(&scene[a], density, seed.wrapping_add(a as u64))? {
                let mut hit = false;
                for (b, acc) in pair.iter_mut().enumerate() {
                    if b != a && hits(&p, b) {
                        *acc += w;
                        hit = true;
                    }
                }
                if hit {
                    any += w;
                }
            }
            Ok((any, pair))
        })
        .collect::<Result<_, MetricError>>()?;
    let per_object: Vec<f64> = per.iter().map(|p| p.0).collect();
    let mut per_pair = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            per_pair.push((i, j, per[i].1[j] + per[j].1[i]));
        }
    }
    Ok(AreaTotals {
        total: per_object.iter().sum(),
        pairwise_total: per_pair.iter().map(|p| p.2).sum(),
        per_object,
        per_pair,
    })
}

fn grown(b: &Aabb, by: f64) -> Aabb {
    Aabb {
        min: b.min - Vector3::repeat(by),
        max: b.max + Vector3::repeat(by),
    }
}

fn inside(b: &Aabb, p: &Point3<f64>) -> bool {
    (0..3).all(|k| p[k] >= b.min[k] && p[k] <= b.max[k])
}

/// Surface of each object lying within `threshold` of another object's surface.
pub fn contact_area(scene: &[PosedMesh], threshold: f64, density: f64, seed: u64) -> Result<AreaTotals, MetricError> {
    let boxes: Vec<Aabb> = scene.iter().map(|o| grown(&o.bounding_box(), threshold)).collect();
    accumulate(scene, density, seed, |p, b| {
        inside(&boxes[b], p) && scene[b].closest_point_within(p, threshold).is_some()
    })
}

/// Surface of each object lying inside (or on) another object's solid.
///
/// Each object is voxelized at `voxel_size`; a sample is a candidate when a
/// voxel next to it is occupied or it lies within one voxel of the other
/// surface, and candidates are confirmed by an exact inside test. The exact
/// test keeps surfaces a fraction of a voxel apart from being counted.
pub fn penetration_area(
    scene: &[PosedMesh],
    voxel_size: f64,
    density: f64,
    seed: u64,
) -> Result<AreaTotals, MetricError> {
    let grids: Vec<VoxelGrid> = scene
        .par_iter()
        .map(|o| voxelize_solid(&o.world_mesh(), voxel_size, 1))
        .collect::<Result<_, _>>()?;
    let boxes: Vec<Aabb> = scene.iter().map(|o| grown(&o.bounding_box(), voxel_size)).collect();
    accumulate(scene, density, seed, |p, b| {
        if !inside(&boxes[b], p) {
            return false;
        }
        let candidate = grids[b].occupied_near(p) || scene[b].closest_point_within(p, voxel_size).is_some();
        candidate && (scene[b].closest_point_within(p, SURFACE_EPS).is_some() || scene[b].contains(p))
    })
}

pub fn contact_report(scene: &[PosedMesh], cfg: &ContactConfig) -> Result<ContactReport, MetricError> {
    cfg.validate()?;
    let c = contact_area(scene, cfg.contact_threshold, cfg.samples_per_mm2, cfg.seed)?;
    let p = penetration_area(scene, cfg.voxel_size, cfg.samples_per_mm2, cfg.seed)?;
    let per_pair = c
        .per_pair
        .iter()
        .zip(&p.per_pair)
        .map(|(&(i, j, contact), &(_, _, penetration))| PairArea {
            i,
            j,
            contact,
            penetration,
        })
        .collect();
    Ok(ContactReport {
        contact_area: c.total,
        penetration_area: p.total,
        ratio: (c.total > 0.0).then(|| p.total / c.total),
        contact_area_pairwise: c.pairwise_total,
        penetration_area_pairwise: p.pairwise_total,
        per_object_contact: c.per_object,
        per_object_penetration: p.per_object,
        per_pair,
        config: cfg.clone(),
    })
}
