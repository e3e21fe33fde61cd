use std::path::PathBuf;

use clap::Args;
use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use scenereg_core::pose::{Pose7DoF, Sim3Transform};
use scenereg_core::registration::{pipelines, RegistrationError, RegistrationResult};

use super::{load_scene, save_manifest};
use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::report::{write_json, Report};

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Manifest with a scan and an init_pose for every object.
    pub manifest: PathBuf,
    /// Refined manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Report path (default: <out stem>.report.json next to --out).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Registration pipeline: distance-only or distance+normals.
    #[arg(long, default_value = "distance+normals")]
    pub stage: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Diverged,
    Failed,
}

#[derive(Debug, Serialize)]
pub struct Refinement {
    pub pose: Pose7DoF,
    pub stage1_pose: Pose7DoF,
    pub stage1_cost: f64,
    pub final_cost: f64,
    pub mean_residual: f64,
    pub median_residual: f64,
    pub inlier_fraction: f64,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
pub struct ObjectOutcome {
    pub id: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub init_pose: Pose7DoF,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Refinement>,
}

#[derive(Debug, Serialize)]
struct Body<'a> {
    manifest: String,
    stage: &'a str,
    objects: Vec<ObjectOutcome>,
}

fn with_sigma(rigid: &scenereg_core::pose::RigidTransform, sigma: f64) -> Pose7DoF {
    Pose7DoF::new(rigid.rotation, rigid.translation, sigma).expect("sigma already validated")
}

fn refinement(r: &RegistrationResult, sigma: f64) -> Refinement {
    Refinement {
        pose: with_sigma(&r.pose, sigma),
        stage1_pose: with_sigma(&r.stage1_pose, sigma),
        stage1_cost: r.stage1_cost,
        final_cost: r.final_cost,
        mean_residual: r.mean_residual,
        median_residual: r.median_residual,
        inlier_fraction: r.inlier_fraction,
        iterations: r.iterations,
    }
}

pub fn run(args: &RegisterArgs, cfg: &RunConfig) -> Result<u8, CliError> {
    let registry = pipelines();
    let pipeline = registry.get(&args.stage).map_err(|e| CliError::usage(e.to_string()))?;
    let scene = load_scene(&args.manifest)?;
    let inits = scene.manifest.require_init_poses()?;
    let scan = scene.scan()?.clone();

    let outcomes: Vec<ObjectOutcome> = scene
        .manifest
        .objects
        .par_iter()
        .zip(&scene.meshes)
        .zip(&inits)
        .map(|((obj, bvh), init)| {
            let scale = Sim3Transform::new(UnitQuaternion::identity(), Vector3::zeros(), init.sigma())
                .expect("manifest poses have positive scale");
            let mesh = bvh.mesh().transformed(&scale);
            let (status, error, result) = match pipeline.run(&mesh, &scan, &init.rigid_part(), &cfg.registration) {
                Ok(r) => (Status::Ok, None, Some(refinement(&r, init.sigma()))),
                Err(e @ RegistrationError::Diverged(_)) => (Status::Diverged, Some(e.to_string()), None),
                Err(e) => (Status::Failed, Some(e.to_string()), None),
            };
            ObjectOutcome {
                id: obj.id.clone(),
                status,
                error,
                init_pose: *init,
                result,
            }
        })
        .collect();

    let mut refined = scene.manifest.clone();
    for (o, out) in refined.objects.iter_mut().zip(&outcomes) {
        match &out.result {
            Some(r) => o.pose = r.pose,
            None => log::warn!("object '{}': {}", out.id, out.error.as_deref().unwrap_or("failed")),
        }
    }
    save_manifest(&refined, &scene.dir, &args.out)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    let failed = outcomes.iter().filter(|o| o.status != Status::Ok).count();
    let body = Body {
        manifest: args.manifest.display().to_string(),
        stage: &args.stage,
        objects: outcomes,
    };
    write_json(&report_path, &Report::new("register", cfg, body))?;
    if failed > 0 {
        log::warn!("{failed} object(s) did not register");
        return Ok(exit::PARTIAL);
    }
    Ok(exit::OK)
}
