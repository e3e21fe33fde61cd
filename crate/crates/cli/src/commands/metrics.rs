use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use scenereg_core::geometry::{Camera, PosedMesh};
use scenereg_core::manifest::LoadedScene;
use scenereg_core::metrics::{contact_report, depth_error, scene_score, ContactReport, DepthErrorStats, ReconScore};
use scenereg_core::pose::Pose7DoF;

use super::load_scene;
use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::report::{read_json, write_json, Report};

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Scene manifest to evaluate.
    pub manifest: PathBuf,
    /// Contact and penetration areas between objects.
    #[arg(long)]
    pub contacts: bool,
    /// Depth error of the posed objects against the scan.
    #[arg(long)]
    pub depth: bool,
    /// Cameras for --depth (JSON list) when the manifest has none.
    #[arg(long, value_name = "FILE")]
    pub cameras: Option<PathBuf>,
    /// Reconstruction IoU and Chamfer distance against this ground-truth manifest.
    #[arg(long, value_name = "GT_MANIFEST")]
    pub recon: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV table (default: --out with a .csv extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct MetricsBody {
    pub manifest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_manifest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contacts: Option<ContactReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthErrorStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recon: Option<ReconScore>,
}

/// Column headers of the metrics table.
pub const CSV_HEADER: [&str; 9] = [
    "scene", "μ|δ|", "med|δ|", "σδ", "C.Area", "P.Area", "Ratio", "IoU", "CD",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn csv_row(scene: &str, body: &MetricsBody) -> Vec<String> {
    let d = body.depth.as_ref();
    let c = body.contacts.as_ref();
    let r = body.recon.as_ref();
    vec![
        scene.to_string(),
        cell(d.map(|d| d.mean_abs)),
        cell(d.map(|d| d.median_abs)),
        cell(d.map(|d| d.std)),
        cell(c.map(|c| c.contact_area)),
        cell(c.map(|c| c.penetration_area)),
        cell(c.and_then(|c| c.ratio)),
        cell(r.and_then(|r| r.object_iou)),
        cell(r.and_then(|r| r.object_cd)),
    ]
}

pub fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn cameras_for(scene: &LoadedScene, file: Option<&Path>) -> Result<Vec<Camera>, CliError> {
    match (file, &scene.manifest.cameras) {
        (Some(p), _) => read_json(p),
        (None, Some(c)) if !c.is_empty() => Ok(c.clone()),
        _ => Err(CliError::usage(
            "--depth needs cameras: none in the manifest and no --cameras file given",
        )),
    }
}

pub fn run(args: &MetricsArgs, cfg: &RunConfig) -> Result<u8, CliError> {
    if !(args.contacts || args.depth || args.recon.is_some()) {
        return Err(CliError::usage(
            "choose at least one of --contacts, --depth, --recon <gt>",
        ));
    }
    let scene = load_scene(&args.manifest)?;
    // validate everything before the expensive parts
    let cameras = if args.depth {
        scene.scan()?;
        Some(cameras_for(&scene, args.cameras.as_deref())?)
    } else {
        None
    };
    let gt = args.recon.as_deref().map(load_scene).transpose()?;

    let posed = scene.posed();
    let contacts = if args.contacts {
        Some(contact_report(&posed, &cfg.contact)?)
    } else {
        None
    };
    let depth = match &cameras {
        Some(cams) => {
            let scan = PosedMesh::new(scene.scan()?.clone(), &Pose7DoF::identity());
            match depth_error(&posed, &scan, cams) {
                Ok(d) => Some(d),
                Err(e) => {
                    let err = CliError::from(e);
                    if err.code == exit::METRIC {
                        return Err(CliError::new(
                            exit::METRIC,
                            format!("depth error: {err} (check that the poses place objects in front of the cameras)"),
                        ));
                    }
                    return Err(err);
                }
            }
        }
        None => None,
    };
    let recon = match &gt {
        Some(g) => Some(scene_score(&scene, g, &cfg.recon_config())?),
        None => None,
    };
    if let Some(r) = &recon {
        for w in &r.warnings {
            log::warn!("{w}");
        }
    }

    let body = MetricsBody {
        manifest: args.manifest.display().to_string(),
        gt_manifest: args.recon.as_ref().map(|p| p.display().to_string()),
        contacts,
        depth,
        recon,
    };
    let name = args.manifest.display().to_string();
    let csv_path = args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    let row = csv_row(&name, &body);
    write_json(&args.out, &Report::new("metrics", cfg, body))?;
    write_csv(&csv_path, &[row])?;
    Ok(exit::OK)
}
