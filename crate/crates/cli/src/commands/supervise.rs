use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use scenereg_core::alignment::{gt_pose_supervision, Supervision};
use scenereg_core::geometry::{sample_surface, MeshBVH};
use scenereg_core::metrics::{combined_loss, LossBreakdown, ObjectState};
use scenereg_core::pose::Pose7DoF;

use super::load_scene;
use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::report::{write_json, Report};

#[derive(Debug, Args)]
pub struct SuperviseArgs {
    /// Predicted scene manifest.
    pub pred: PathBuf,
    /// Ground-truth scene manifest.
    pub gt: PathBuf,
    /// Report with the supervision targets and the loss.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Body {
    pred_manifest: String,
    gt_manifest: String,
    supervision: Supervision,
    unmatched_pred: Vec<String>,
    unmatched_gt: Vec<String>,
    /// Loss of the predicted poses against the extracted targets; absent when nothing matched.
    loss: Option<LossBreakdown>,
}

fn state(bvh: &MeshBVH, pose: Pose7DoF, count: usize, seed: u64) -> Result<ObjectState, CliError> {
    let samples = sample_surface(bvh.mesh(), count, seed).map_err(|e| CliError::data(e.to_string()))?;
    Ok(ObjectState {
        samples: samples.into_iter().map(|s| s.point).collect(),
        pose,
    })
}

pub fn run(args: &SuperviseArgs, cfg: &RunConfig) -> Result<u8, CliError> {
    let pred = load_scene(&args.pred)?;
    let gt = load_scene(&args.gt)?;
    let sup = gt_pose_supervision(&pred, &gt, &cfg.icp)?;
    for w in &sup.warnings {
        log::warn!("{w}");
    }

    let mut p_states = Vec::new();
    let mut g_states = Vec::new();
    for t in &sup.targets {
        let n = cfg.recon.cd_samples;
        p_states.push(state(
            &pred.meshes[t.pred_index],
            pred.manifest.objects[t.pred_index].pose,
            n,
            cfg.seed,
        )?);
        g_states.push(state(&gt.meshes[t.gt_index], t.target_pose, n, cfg.seed)?);
    }
    let loss = if p_states.is_empty() {
        None
    } else {
        Some(combined_loss(&p_states, &g_states, &cfg.loss)?)
    };

    let ids = |scene: &scenereg_core::manifest::LoadedScene, idx: &[usize]| {
        idx.iter()
            .map(|&i| scene.manifest.objects[i].id.clone())
            .collect::<Vec<_>>()
    };
    let unmatched_pred = ids(&pred, &sup.matching.unmatched_pred);
    let unmatched_gt = ids(&gt, &sup.matching.unmatched_gt);
    if !unmatched_pred.is_empty() || !unmatched_gt.is_empty() {
        log::warn!("unmatched objects: pred {unmatched_pred:?}, gt {unmatched_gt:?}");
    }
    let body = Body {
        pred_manifest: args.pred.display().to_string(),
        gt_manifest: args.gt.display().to_string(),
        supervision: sup,
        unmatched_pred,
        unmatched_gt,
        loss,
    };
    write_json(&args.out, &Report::new("supervise", cfg, body))?;
    Ok(exit::OK)
}
