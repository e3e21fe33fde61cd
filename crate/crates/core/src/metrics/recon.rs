use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::alignment::{align_scenes, match_aligned, IcpConfig, Matching, SceneObjects};
use crate::geometry::{sample_surface, Aabb, GridSpec, MeshBVH, PointIndex, TriangleMesh, VoxelGrid};
use crate::manifest::LoadedScene;
use crate::pose::{decompose_sim3, Pose7DoF, Similarity};

/// Symmetric Chamfer distance: mean squared nearest-neighbour distance from
/// each set to the other, summed.
pub fn chamfer(a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySet);
    }
    Ok(one_way(a, &PointIndex::new(b.to_vec())) + one_way(b, &PointIndex::new(a.to_vec())))
}

fn one_way(from: &[Point3<f64>], to: &PointIndex) -> f64 {
    let d: Vec<f64> = from.par_iter().map(|p| to.nearest(p).1).collect();
    d.iter().sum::<f64>() / from.len() as f64
}

/// Gradient of `chamfer(pred, gt)` with respect to each point of `pred`,
/// holding the nearest-neighbour assignments fixed.
pub fn chamfer_gradient(pred: &[Point3<f64>], gt: &[Point3<f64>]) -> Result<Vec<Vector3<f64>>, MetricError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let gt_index = PointIndex::new(gt.to_vec());
    let pred_index = PointIndex::new(pred.to_vec());
    let (np, ng) = (pred.len() as f64, gt.len() as f64);
    let mut grad: Vec<Vector3<f64>> = pred
        .iter()
        .map(|x| 2.0 * (x - gt[gt_index.nearest(x).0]) / np)
        .collect();
    for y in gt {
        let k = pred_index.nearest(y).0;
        grad[k] += 2.0 * (pred[k] - y) / ng;
    }
    Ok(grad)
}

/// Shared lattice over the union of the boxes, `resolution` voxels along its
/// longest side.
fn shared_grid(boxes: &[Aabb], resolution: usize) -> Result<GridSpec, MetricError> {
    if resolution == 0 {
        return Err(MetricError::InvalidParameter("IoU resolution must be positive".into()));
    }
    let union = boxes.iter().fold(Aabb::empty(), |acc, b| acc.merge(b));
    let size = union.extent().max() / resolution as f64;
    Ok(GridSpec::covering(&union, size, 0)?)
}

fn occupancy(meshes: &[&TriangleMesh], spec: GridSpec) -> VoxelGrid {
    let grids: Vec<VoxelGrid> = meshes
        .par_iter()
        .map(|m| VoxelGrid::from_bvh(&MeshBVH::new((*m).clone()), spec))
        .collect();
    let mut occ = VoxelGrid::empty(spec);
    for g in &grids {
        occ.union_with(g);
    }
    occ
}

fn iou_of(a: &[&TriangleMesh], b: &[&TriangleMesh], resolution: usize) -> Result<f64, MetricError> {
    let boxes: Vec<Aabb> = a.iter().chain(b).map(|m| m.bounding_box()).collect();
    let spec = shared_grid(&boxes, resolution)?;
    let (inter, union) = occupancy(a, spec).overlap_counts(&occupancy(b, spec));
    if union == 0 {
        return Err(MetricError::InvalidParameter("neither shape encloses any voxel".into()));
    }
    Ok(inter as f64 / union as f64)
}

/// Solid-voxel IoU of two world-frame meshes on a shared grid.
pub fn voxel_iou(a: &TriangleMesh, b: &TriangleMesh, resolution: usize) -> Result<f64, MetricError> {
    iou_of(&[a], &[b], resolution)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub icp: IcpConfig,
    /// Surface samples per object (and per scene) for Chamfer distance.
    pub cd_samples: usize,
    /// Voxels along the longest side of the union box.
    pub iou_resolution: usize,
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            icp: IcpConfig::default(),
            cd_samples: 2000,
            iou_resolution: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectScore {
    pub pred_index: usize,
    pub gt_index: usize,
    pub iou: f64,
    pub cd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconScore {
    /// Means over matched objects; `None` when nothing matched.
    pub object_iou: Option<f64>,
    pub object_cd: Option<f64>,
    pub scene_iou: f64,
    pub scene_cd: f64,
    pub objects: Vec<ObjectScore>,
    pub matching: Matching,
    pub global: Pose7DoF,
    pub global_rms: Option<f64>,
    pub warnings: Vec<String>,
}

/// World samples of a mesh placed by `pose`. Samples are drawn in the mesh
/// frame so that equal meshes under equal seeds give corresponding points.
fn placed_samples(
    mesh: &TriangleMesh,
    pose: &impl Similarity,
    count: usize,
    seed: u64,
) -> Result<Vec<Point3<f64>>, MetricError> {
    Ok(sample_surface(mesh, count, seed)?
        .into_iter()
        .map(|s| pose.apply(&s.point))
        .collect())
}

/// Reconstruction quality of a predicted scene against ground truth: global
/// Sim(3) alignment, object matching, then per-object and whole-scene voxel
/// IoU and Chamfer distance.
pub fn scene_score(pred: &LoadedScene, gt: &LoadedScene, cfg: &ReconConfig) -> Result<ReconScore, MetricError> {
    if cfg.cd_samples == 0 {
        return Err(MetricError::InvalidParameter("cd_samples must be positive".into()));
    }
    let pred_objs: SceneObjects = pred.placed_bvhs();
    let gt_objs: SceneObjects = gt.placed_bvhs();
    let (global, rms, warnings) = align_scenes(&pred_objs, &gt_objs, None, &cfg.icp)?;
    let matching = match_aligned(&pred_objs, &global, rms.is_some(), &gt_objs);

    let pred_world: Vec<TriangleMesh> = pred_objs
        .iter()
        .map(|(b, p)| b.mesh().transformed(&global.compose(p)))
        .collect();
    let gt_world: Vec<TriangleMesh> = gt_objs.iter().map(|(b, p)| b.mesh().transformed(p)).collect();

    let objects = matching
        .pairs
        .par_iter()
        .map(|&(i, j)| {
            let iou = voxel_iou(&pred_world[i], &gt_world[j], cfg.iou_resolution)?;
            let (pb, pp) = &pred_objs[i];
            let (gb, gp) = &gt_objs[j];
            let a = placed_samples(pb.mesh(), &global.compose(pp), cfg.cd_samples, cfg.seed)?;
            let b = placed_samples(gb.mesh(), gp, cfg.cd_samples, cfg.seed)?;
            Ok(ObjectScore {
                pred_index: i,
                gt_index: j,
                iou,
                cd: chamfer(&a, &b)?,
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    let mean = |f: fn(&ObjectScore) -> f64| {
        (!objects.is_empty()).then(|| objects.iter().map(f).sum::<f64>() / objects.len() as f64)
    };

    let pred_refs: Vec<&TriangleMesh> = pred_world.iter().collect();
    let gt_refs: Vec<&TriangleMesh> = gt_world.iter().collect();
    if pred_refs.is_empty() || gt_refs.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let scene_iou = iou_of(&pred_refs, &gt_refs, cfg.iou_resolution)?;
    let pred_merged = TriangleMesh::merge(pred_refs.iter().copied())?;
    let gt_merged = TriangleMesh::merge(gt_refs.iter().copied())?;
    let identity = Pose7DoF::identity();
    let scene_cd = chamfer(
        &placed_samples(&pred_merged, &identity, cfg.cd_samples, cfg.seed)?,
        &placed_samples(&gt_merged, &identity, cfg.cd_samples, cfg.seed)?,
    )?;

    Ok(ReconScore {
        object_iou: mean(|o| o.iou),
        object_cd: mean(|o| o.cd),
        scene_iou,
        scene_cd,
        objects,
        matching,
        global: decompose_sim3(&global),
        global_rms: rms,
        warnings,
    })
}
