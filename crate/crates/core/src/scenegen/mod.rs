//! Procedural contact-rich tabletop scenes.
//!
//! Objects from a [`Catalog`] are placed on the plane `z = 0`, then stacked
//! and nested by lowering them until they meet a support. A scene is kept
//! only if its penetration/contact ratio stays below [`MAX_PENETRATION_RATIO`];
//! it is then rendered from sampled cameras and written as a manifest plus
//! depth and instance maps.

mod camera;
mod catalog;
mod composer;
mod place;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{bounding_sphere, sample_cameras, CameraSampler};
pub use catalog::{Catalog, CatalogEntry};
pub use composer::{composers, Easy, Hard, Medium, SceneComposer};
pub use place::{
    drop_onto, interpenetrates, nest_objects, place_base, slide, stack_objects, travel_distance, BaseLayout, Layout,
    Placement, Role, SlotRequirement, CONTACT_MARGIN, CONTACT_TOLERANCE, MAX_REJECTIONS,
};

use crate::geometry::io::save_obj;
use crate::geometry::{render_posed, GeometryError, PosedMesh, TriangleMesh};
use crate::manifest::{ManifestError, ManifestObject, SceneManifest};
use crate::metrics::{contact_report, ContactConfig, ContactReport, MetricError};
use crate::registry::UnknownStrategy;

/// Scenes at or above this penetration/contact ratio are regenerated.
pub const MAX_PENETRATION_RATIO: f64 = 0.2;
pub const MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum SceneGenError {
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no compatible object pair for {0}")]
    NoCompatiblePair(&'static str),
    #[error("placement rejected {0} times")]
    PlacementExhausted(usize),
    #[error("no acceptable scene after {attempts} attempts: {last}")]
    GenerationFailed { attempts: usize, last: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    UnknownComposer(#[from] UnknownStrategy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown difficulty '{s}' (expected easy, medium or hard)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecipe {
    pub difficulty: Difficulty,
    pub base_count: usize,
    pub stacked_count: usize,
    pub nested_count: usize,
    /// Half-width of the uniform (x, y) jitter (mm).
    pub jitter: f64,
    /// Probability that an unconstrained base object stands upright.
    pub upright_fraction: f64,
    /// Top volume ≤ factor × support top-face area × support height.
    pub stack_factor: f64,
    /// Inner volume ≤ factor × container open volume.
    pub nest_factor: f64,
    pub seed: u64,
}

impl SceneRecipe {
    pub fn new(difficulty: Difficulty, seed: u64) -> Self {
        let (stacked_count, nested_count, jitter) = match difficulty {
            Difficulty::Easy => (0, 0, 10.0),
            Difficulty::Medium => (2, 0, 5.0),
            Difficulty::Hard => (2, 2, 5.0),
        };
        Self {
            difficulty,
            base_count: 4,
            stacked_count,
            nested_count,
            jitter,
            upright_fraction: 0.5,
            stack_factor: 0.5,
            nest_factor: 0.8,
            seed,
        }
    }

    pub fn object_count(&self) -> usize {
        self.base_count + self.stacked_count + self.nested_count
    }

    pub fn validate(&self) -> Result<(), SceneGenError> {
        let unit = (0.0..=1.0).contains(&self.upright_fraction);
        if !(unit && self.jitter >= 0.0 && self.stack_factor > 0.0 && self.nest_factor > 0.0) {
            return Err(SceneGenError::InvalidParameter(
                "jitter must be non-negative, upright fraction in [0, 1], factors positive".into(),
            ));
        }
        if self.base_count == 0 {
            return Err(SceneGenError::InvalidParameter(
                "a scene needs at least one base object".into(),
            ));
        }
        Ok(())
    }
}

/// Composes one layout without the contact gate.
pub fn compose(catalog: &Catalog, recipe: &SceneRecipe, rng: &mut ChaCha8Rng) -> Result<Vec<Placement>, SceneGenError> {
    recipe.validate()?;
    let registry = composers();
    let composer = registry.get(recipe.difficulty.as_str())?;
    let mut layout = Layout::new(catalog);
    composer.compose(&mut layout, recipe, rng)?;
    Ok(layout.placements)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateOptions {
    pub cameras: CameraSampler,
    pub contact: ContactConfig,
    /// Gate threshold on the penetration/contact ratio.
    pub max_ratio: f64,
    pub max_attempts: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            cameras: CameraSampler::default(),
            contact: ContactConfig::default(),
            max_ratio: MAX_PENETRATION_RATIO,
            max_attempts: MAX_ATTEMPTS,
        }
    }
}

/// An accepted layout with its gate report.
#[derive(Debug, Clone)]
pub struct GatedScene {
    pub placements: Vec<Placement>,
    pub posed: Vec<PosedMesh>,
    pub contact: ContactReport,
    /// 1-based attempt that passed the gate.
    pub attempt: usize,
}

fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Composes layouts until one passes the penetration-ratio gate.
/// Placement failures and gate failures trigger a retry with a fresh
/// stream; other errors are returned at once.
pub fn compose_gated(
    catalog: &Catalog,
    recipe: &SceneRecipe,
    opts: &GenerateOptions,
) -> Result<GatedScene, SceneGenError> {
    let mut last = String::new();
    let mut placement_errors = Vec::new();
    for attempt in 0..opts.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed(recipe.seed, attempt));
        let placements = match compose(catalog, recipe, &mut rng) {
            Ok(p) => p,
            Err(e @ (SceneGenError::PlacementExhausted(_) | SceneGenError::NoCompatiblePair(_))) => {
                log::debug!("attempt {}: {e}", attempt + 1);
                last = e.to_string();
                placement_errors.push(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let posed: Vec<PosedMesh> = placements
            .iter()
            .map(|p| PosedMesh::new(catalog.meshes[p.entry].clone(), &p.pose))
            .collect();
        let contact = contact_report(
            &posed,
            &ContactConfig {
                seed: recipe.seed,
                ..opts.contact.clone()
            },
        )?;
        match contact.ratio {
            Some(r) if r >= opts.max_ratio => {
                last = format!("penetration/contact ratio {r:.4} >= {}", opts.max_ratio);
                log::debug!("attempt {}: {last}", attempt + 1);
            }
            _ => {
                return Ok(GatedScene {
                    placements,
                    posed,
                    contact,
                    attempt: attempt + 1,
                })
            }
        }
    }
    // every attempt failed to place: report the placement error itself
    if placement_errors.len() == opts.max_attempts {
        if let Some(e) = placement_errors.pop() {
            return Err(e);
        }
    }
    Err(SceneGenError::GenerationFailed {
        attempts: opts.max_attempts,
        last,
    })
}

/// Per-scene record written next to the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationRecord {
    pub recipe: SceneRecipe,
    pub options: GenerateOptions,
    pub attempt: usize,
    pub placements: Vec<PlacementRecord>,
    pub contact: ContactReport,
    pub views: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlacementRecord {
    pub id: String,
    pub role: Role,
    pub upright: bool,
}

pub struct GeneratedScene {
    pub manifest_path: PathBuf,
    pub manifest: SceneManifest,
    pub record: GenerationRecord,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SceneGenError + '_ {
    move |source| SceneGenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Generates one scene into `out_dir`:
///
/// ```text
/// scene.json              manifest (objects, scan, cameras)
/// generation.json         recipe, gate report, placement roles
/// scan.obj                merged world geometry
/// meshes/<id>.obj         object meshes in their own frames
/// views/view_XX.depth     depth maps
/// views/view_XX.inst      instance maps (object index + 1, 0 = background)
/// ```
pub fn generate(
    recipe: &SceneRecipe,
    catalog: &Catalog,
    out_dir: &Path,
    opts: &GenerateOptions,
) -> Result<GeneratedScene, SceneGenError> {
    opts.cameras.validate()?;
    let scene = compose_gated(catalog, recipe, opts)?;
    let cameras = sample_cameras(&scene.posed, &opts.cameras, recipe.seed)?;

    let meshes_dir = out_dir.join("meshes");
    let views_dir = out_dir.join("views");
    for d in [&meshes_dir, &views_dir] {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let mut objects = Vec::new();
    for p in &scene.placements {
        let e = &catalog.entries[p.entry];
        let rel = format!("meshes/{}.obj", e.id);
        let path = out_dir.join(&rel);
        save_obj(catalog.meshes[p.entry].mesh(), &path).map_err(io_err(&path))?;
        objects.push(ManifestObject {
            id: e.id.clone(),
            mesh: rel,
            pose: p.pose,
            init_pose: None,
        });
    }
    let world: Vec<TriangleMesh> = scene.posed.iter().map(|p| p.world_mesh()).collect();
    let scan = TriangleMesh::merge(&world)?;
    let scan_path = out_dir.join("scan.obj");
    save_obj(&scan, &scan_path).map_err(io_err(&scan_path))?;

    let rendered: Vec<_> = cameras.par_iter().map(|c| render_posed(&scene.posed, c)).collect();
    let mut views = Vec::new();
    for (k, (depth, inst)) in rendered.iter().enumerate() {
        let stem = format!("views/view_{k:02}");
        let dp = out_dir.join(format!("{stem}.depth"));
        depth.save(&dp).map_err(io_err(&dp))?;
        let ip = out_dir.join(format!("{stem}.inst"));
        inst.save(&ip).map_err(io_err(&ip))?;
        views.push(stem);
    }

    let mut manifest = SceneManifest::new(objects);
    manifest.scan = Some("scan.obj".into());
    manifest.cameras = Some(cameras);
    let manifest_path = out_dir.join("scene.json");
    manifest.save(&manifest_path)?;

    let record = GenerationRecord {
        recipe: recipe.clone(),
        options: opts.clone(),
        attempt: scene.attempt,
        placements: scene
            .placements
            .iter()
            .map(|p| PlacementRecord {
                id: catalog.entries[p.entry].id.clone(),
                role: p.role,
                upright: p.upright,
            })
            .collect(),
        contact: scene.contact,
        views,
    };
    let rec_path = out_dir.join("generation.json");
    let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
    text.push('\n');
    std::fs::write(&rec_path, text).map_err(io_err(&rec_path))?;
    Ok(GeneratedScene {
        manifest_path,
        manifest,
        record,
    })
}
