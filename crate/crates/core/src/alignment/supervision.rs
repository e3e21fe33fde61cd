use std::sync::Arc;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::Serialize;

use super::{icp_sim3, icp_sim3_restarts, match_centroids, placed_centroid, AlignmentError, IcpConfig, Matching};
use crate::geometry::{sample_surface, MeshBVH, PosedMesh, TriangleMesh};
use crate::manifest::LoadedScene;
use crate::pose::{decompose_sim3, Pose7DoF, Sim3Transform, Similarity};

/// Matching gate as a multiple of the ground-truth object diameter.
pub const MATCH_GATE: f64 = 0.5;

/// Local-frame object meshes with their world poses.
pub type SceneObjects = Vec<(Arc<MeshBVH>, Pose7DoF)>;

/// Pose target for one matched predicted object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupervisionTarget {
    pub pred_index: usize,
    pub gt_index: usize,
    /// Correction `(q̂, t̂, σ̂)` taking the predicted object onto its ground-truth counterpart.
    pub pose: Pose7DoF,
    /// The correction applied to the predicted pose.
    pub target_pose: Pose7DoF,
    /// Final per-object ICP RMS, in mm.
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Supervision {
    /// Scene-level similarity applied to the prediction before matching.
    pub global: Pose7DoF,
    pub global_rms: Option<f64>,
    pub matching: Matching,
    pub targets: Vec<SupervisionTarget>,
    pub warnings: Vec<String>,
}

fn world_mesh(objects: &SceneObjects, scan: Option<&MeshBVH>) -> Option<TriangleMesh> {
    let mut parts: Vec<TriangleMesh> = objects.iter().map(|(b, p)| b.mesh().transformed(p)).collect();
    if let Some(s) = scan {
        parts.push(s.mesh().clone());
    }
    if parts.is_empty() {
        return None;
    }
    TriangleMesh::merge(&parts).ok()
}

/// Scene-level similarity taking the prediction onto the ground truth: best
/// of the configured ICP restarts on area-uniform samples of the pooled
/// prediction. Returns `None` for the RMS (with a warning) when the scenes do
/// not overlap or one of them is empty.
pub fn align_scenes(
    pred: &SceneObjects,
    gt: &SceneObjects,
    scans: Option<(&MeshBVH, &MeshBVH)>,
    cfg: &IcpConfig,
) -> Result<(Sim3Transform, Option<f64>, Vec<String>), AlignmentError> {
    cfg.validate()?;
    let pred_world = world_mesh(pred, scans.map(|s| s.0));
    let gt_world = world_mesh(gt, scans.map(|s| s.1));
    match (pred_world, gt_world) {
        (Some(p), Some(g)) if p.bounding_box().intersects(&g.bounding_box()) => {
            let src: Vec<Point3<f64>> = sample_surface(&p, cfg.sample_count, cfg.seed)?
                .into_iter()
                .map(|s| s.point)
                .collect();
            let (best, _) = icp_sim3_restarts(&src, &MeshBVH::new(g), &Sim3Transform::identity(), cfg)?;
            Ok((best.transform, Some(best.rms), Vec::new()))
        }
        (Some(_), Some(_)) => Ok((
            Sim3Transform::identity(),
            None,
            vec!["predicted and ground-truth scenes do not overlap; skipping global alignment".into()],
        )),
        _ => Ok((
            Sim3Transform::identity(),
            None,
            vec!["one of the scenes has no geometry".into()],
        )),
    }
}

/// Matches globally aligned predicted objects to ground truth; everything is
/// unmatched when the alignment was skipped.
pub fn match_aligned(pred: &SceneObjects, global: &Sim3Transform, aligned_ok: bool, gt: &SceneObjects) -> Matching {
    if !aligned_ok {
        return Matching {
            pairs: Vec::new(),
            unmatched_pred: (0..pred.len()).collect(),
            unmatched_gt: (0..gt.len()).collect(),
            cost: 0.0,
        };
    }
    let pc: Vec<_> = pred
        .iter()
        .map(|(b, p)| {
            let a = global.compose(p);
            (a.apply(&b.mesh().area_centroid()), b.mesh().diameter() * a.scale)
        })
        .collect();
    let gc: Vec<_> = gt.iter().map(|(b, p)| placed_centroid(b.mesh(), p)).collect();
    match_centroids(&pc, &gc, MATCH_GATE)
}

/// Global Sim(3) ICP between the scenes, centroid matching, then a per-object
/// ICP from each predicted object to its match. Scans take part in the global
/// alignment only when both scenes have one.
pub fn supervise_objects(
    pred: &SceneObjects,
    gt: &SceneObjects,
    scans: Option<(&MeshBVH, &MeshBVH)>,
    cfg: &IcpConfig,
) -> Result<Supervision, AlignmentError> {
    let (global, global_rms, mut warnings) = align_scenes(pred, gt, scans, cfg)?;
    let matching = match_aligned(pred, &global, global_rms.is_some(), gt);
    let aligned: Vec<Sim3Transform> = pred.iter().map(|(_, p)| global.compose(p)).collect();
    if matching.pairs.is_empty() && !(pred.is_empty() && gt.is_empty()) {
        warnings.push("no predicted object could be matched to ground truth".into());
    }

    let single = IcpConfig {
        restarts: 1,
        ..cfg.clone()
    };
    let targets = matching
        .pairs
        .par_iter()
        .map(|&(i, j)| {
            let (pb, pp) = &pred[i];
            let src: Vec<Point3<f64>> = sample_surface(pb.mesh(), cfg.sample_count, cfg.seed)?
                .into_iter()
                .map(|s| aligned[i].apply(&s.point))
                .collect();
            let target = PosedMesh::new(gt[j].0.clone(), &gt[j].1);
            let r = icp_sim3(&src, &target, &Sim3Transform::identity(), &single)?;
            let correction = r.transform.compose(&global);
            Ok(SupervisionTarget {
                pred_index: i,
                gt_index: j,
                pose: decompose_sim3(&correction),
                target_pose: decompose_sim3(&correction.compose(pp)),
                rms: r.rms,
            })
        })
        .collect::<Result<Vec<_>, AlignmentError>>()?;

    Ok(Supervision {
        global: decompose_sim3(&global),
        global_rms,
        matching,
        targets,
        warnings,
    })
}

/// [`supervise_objects`] on two loaded manifests.
pub fn gt_pose_supervision(
    pred: &LoadedScene,
    gt: &LoadedScene,
    cfg: &IcpConfig,
) -> Result<Supervision, AlignmentError> {
    supervise_objects(
        &pred.placed_bvhs(),
        &gt.placed_bvhs(),
        LoadedScene::scan_pair(pred, gt),
        cfg,
    )
}
