//! Scene manifest: a scan plus posed object meshes, stored as JSON.
//!
//! ```json
//! {
//!   "version": "v1",
//!   "units": "mm",
//!   "scan": "scan.obj",
//!   "objects": [{"id": "bowl", "mesh": "bowl.obj", "pose": {"q": [1,0,0,0], "t": [0,0,0], "sigma": 1}}],
//!   "cameras": [...]
//! }
//! ```
//!
//! Mesh paths are relative to the manifest file. Saving a loaded manifest
//! reproduces it byte for byte.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::io::load_mesh;
use crate::geometry::{Camera, GeometryError, MeshBVH, PosedMesh, TriangleMesh};
use crate::pose::Pose7DoF;

pub const MANIFEST_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed manifest: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("object '{object}' is missing required field '{field}'")]
    MissingField { object: String, field: &'static str },
    #[error("manifest has no '{0}'")]
    MissingScanOrCameras(&'static str),
    #[error("mesh {path}: {source}")]
    Mesh { path: PathBuf, source: GeometryError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestObject {
    pub id: String,
    pub mesh: String,
    pub pose: Pose7DoF,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_pose: Option<Pose7DoF>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub version: String,
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<String>,
    pub objects: Vec<ManifestObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<Vec<Camera>>,
}

impl SceneManifest {
    pub fn new(objects: Vec<ManifestObject>) -> Self {
        Self {
            version: MANIFEST_VERSION.into(),
            units: "mm".into(),
            scan: None,
            objects,
            cameras: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.into(),
            source,
        })?;
        let m = Self::from_json(&text).map_err(|source| ManifestError::Json {
            path: path.into(),
            source,
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        std::fs::write(path, self.to_json()).map_err(|source| ManifestError::Io {
            path: path.into(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version != MANIFEST_VERSION {
            return Err(ManifestError::Invalid(format!(
                "unsupported version '{}' (expected '{MANIFEST_VERSION}')",
                self.version
            )));
        }
        if self.units != "mm" {
            return Err(ManifestError::Invalid(format!(
                "units must be \"mm\", got '{}'",
                self.units
            )));
        }
        let mut seen = HashSet::new();
        for o in &self.objects {
            if o.id.is_empty() {
                return Err(ManifestError::Invalid("object id must not be empty".into()));
            }
            if !seen.insert(o.id.as_str()) {
                return Err(ManifestError::Invalid(format!("duplicate object id '{}'", o.id)));
            }
        }
        Ok(())
    }

    /// Requires every object to carry an `init_pose`.
    pub fn require_init_poses(&self) -> Result<Vec<Pose7DoF>, ManifestError> {
        self.objects
            .iter()
            .map(|o| {
                o.init_pose.ok_or_else(|| ManifestError::MissingField {
                    object: o.id.clone(),
                    field: "init_pose",
                })
            })
            .collect()
    }

    pub fn poses(&self) -> Vec<Pose7DoF> {
        self.objects.iter().map(|o| o.pose).collect()
    }
}

/// A manifest with its meshes loaded. Objects sharing a mesh file share one BVH.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub dir: PathBuf,
    pub meshes: Vec<Arc<MeshBVH>>,
    pub scan: Option<Arc<MeshBVH>>,
}

impl LoadedScene {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let manifest = SceneManifest::load(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_manifest(manifest, dir)
    }

    pub fn from_manifest(manifest: SceneManifest, dir: PathBuf) -> Result<Self, ManifestError> {
        let mut cache: HashMap<PathBuf, Arc<MeshBVH>> = HashMap::new();
        let mut get = |rel: &str| -> Result<Arc<MeshBVH>, ManifestError> {
            let p = dir.join(rel);
            if let Some(b) = cache.get(&p) {
                return Ok(b.clone());
            }
            let mesh = load_mesh(&p).map_err(|source| ManifestError::Mesh {
                path: p.clone(),
                source,
            })?;
            let bvh = Arc::new(MeshBVH::new(mesh));
            cache.insert(p, bvh.clone());
            Ok(bvh)
        };
        let meshes = manifest
            .objects
            .iter()
            .map(|o| get(&o.mesh))
            .collect::<Result<Vec<_>, _>>()?;
        let scan = manifest.scan.as_deref().map(&mut get).transpose()?;
        Ok(Self {
            manifest,
            dir,
            meshes,
            scan,
        })
    }

    /// Objects placed at their manifest poses.
    pub fn posed(&self) -> Vec<PosedMesh> {
        self.meshes
            .iter()
            .zip(&self.manifest.objects)
            .map(|(b, o)| PosedMesh::new(b.clone(), &o.pose))
            .collect()
    }

    /// Local-frame meshes with their poses.
    pub fn objects(&self) -> Vec<(TriangleMesh, Pose7DoF)> {
        self.meshes
            .iter()
            .zip(&self.manifest.objects)
            .map(|(b, o)| (b.mesh().clone(), o.pose))
            .collect()
    }

    /// Shared object BVHs paired with their poses.
    pub fn placed_bvhs(&self) -> Vec<(Arc<MeshBVH>, Pose7DoF)> {
        self.meshes
            .iter()
            .cloned()
            .zip(self.manifest.objects.iter().map(|o| o.pose))
            .collect()
    }

    /// Both scans, when both scenes have one.
    pub fn scan_pair<'a>(a: &'a LoadedScene, b: &'a LoadedScene) -> Option<(&'a MeshBVH, &'a MeshBVH)> {
        Some((a.scan.as_deref()?, b.scan.as_deref()?))
    }

    pub fn scan(&self) -> Result<&Arc<MeshBVH>, ManifestError> {
        self.scan.as_ref().ok_or(ManifestError::MissingScanOrCameras("scan"))
    }
}
