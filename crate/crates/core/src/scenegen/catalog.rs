use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::SceneGenError;
use crate::geometry::io::{load_mesh, save_obj};
use crate::geometry::primitives::{self, BowlGeometry};
use crate::geometry::{MeshBVH, TriangleMesh};
use crate::pose::RigidTransform;

const SEGMENTS: usize = 48;

/// One catalog object. Meshes are in millimetres, upright along +z, with the
/// base at `z = 0` and the symmetry axis (if any) through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub id: String,
    /// Path relative to the catalog file.
    pub mesh: String,
    /// Upright top-face bounding box area (mm²).
    pub top_face_area: f64,
    pub volume: f64,
    pub height: f64,
    /// May be placed on top of another object.
    pub stackable: bool,
    /// Upright, other objects can rest on its top.
    pub flat_top: bool,
    /// Cavity volume for containers (mm³).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nestable_open_volume: Option<f64>,
    /// Radius of the largest disc that passes through the opening (mm).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opening_radius: Option<f64>,
}

/// Catalog entries with their loaded meshes.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
    pub meshes: Vec<Arc<MeshBVH>>,
}

struct Builtin {
    id: &'static str,
    mesh: TriangleMesh,
    stackable: bool,
    flat_top: bool,
    cavity: Option<(f64, f64)>,
}

fn lifted(mesh: TriangleMesh, dz: f64) -> TriangleMesh {
    mesh.transformed(&RigidTransform::from_translation(Vector3::new(0.0, 0.0, dz)))
}

fn cup_cavity(radius: f64, height: f64, wall: f64, base: f64) -> (f64, f64) {
    let r = radius - wall;
    (PI * r * r * (height - base), r)
}

fn bowl_cavity(radius: f64, wall: f64, foot: f64) -> (f64, f64) {
    let g = BowlGeometry { radius, wall, foot };
    let ri = g.inner_radius();
    let d = g.rim_height() - g.floor_height();
    (PI * (ri * ri * d - d.powi(3) / 3.0), ri)
}

fn builtins() -> Vec<Builtin> {
    let cuboid = |x: f64, y: f64, z: f64| {
        primitives::cuboid(Point3::new(-x / 2.0, -y / 2.0, 0.0), Point3::new(x / 2.0, y / 2.0, z))
    };
    let open = |side: f64, h: f64, w: f64, b: f64| {
        let inner = side / 2.0 - w;
        ((side - 2.0 * w).powi(2) * (h - b), inner)
    };
    vec![
        Builtin {
            id: "cube_small",
            mesh: cuboid(30.0, 30.0, 30.0),
            stackable: true,
            flat_top: true,
            cavity: None,
        },
        Builtin {
            id: "cube_large",
            mesh: cuboid(60.0, 60.0, 50.0),
            stackable: true,
            flat_top: true,
            cavity: None,
        },
        Builtin {
            id: "block",
            mesh: cuboid(80.0, 40.0, 30.0),
            stackable: true,
            flat_top: true,
            cavity: None,
        },
        Builtin {
            id: "can",
            mesh: primitives::cylinder(33.0, 100.0, SEGMENTS),
            stackable: true,
            flat_top: true,
            cavity: None,
        },
        Builtin {
            id: "plate",
            mesh: primitives::cylinder(90.0, 10.0, SEGMENTS),
            stackable: true,
            flat_top: true,
            cavity: None,
        },
        Builtin {
            id: "ball",
            mesh: lifted(primitives::uv_sphere(25.0, SEGMENTS, 24), 25.0),
            stackable: true,
            flat_top: false,
            cavity: None,
        },
        Builtin {
            id: "mug",
            mesh: primitives::cup(28.0, 60.0, 2.5, 4.0, SEGMENTS),
            stackable: true,
            flat_top: false,
            cavity: Some(cup_cavity(28.0, 60.0, 2.5, 4.0)),
        },
        Builtin {
            id: "cup",
            mesh: primitives::cup(35.0, 80.0, 3.0, 4.0, SEGMENTS),
            stackable: true,
            flat_top: false,
            cavity: Some(cup_cavity(35.0, 80.0, 3.0, 4.0)),
        },
        Builtin {
            id: "bowl_small",
            mesh: primitives::bowl(45.0, 2.5, 18.0, SEGMENTS, 12),
            stackable: true,
            flat_top: false,
            cavity: Some(bowl_cavity(45.0, 2.5, 18.0)),
        },
        Builtin {
            id: "bowl_large",
            mesh: primitives::bowl(70.0, 3.0, 25.0, SEGMENTS, 16),
            stackable: false,
            flat_top: false,
            cavity: Some(bowl_cavity(70.0, 3.0, 25.0)),
        },
        Builtin {
            id: "tray",
            mesh: primitives::open_box(120.0, 30.0, 3.0, 3.0),
            stackable: false,
            flat_top: false,
            cavity: Some(open(120.0, 30.0, 3.0, 3.0)),
        },
        Builtin {
            id: "pitcher",
            mesh: primitives::cup(45.0, 150.0, 3.0, 5.0, SEGMENTS),
            stackable: false,
            flat_top: false,
            cavity: None,
        },
    ]
}

impl Catalog {
    /// The bundled parametric fixtures.
    pub fn builtin() -> Self {
        let mut entries = Vec::new();
        let mut meshes = Vec::new();
        for b in builtins() {
            entries.push(describe(b.id, &b.mesh, b.stackable, b.flat_top, b.cavity));
            meshes.push(Arc::new(MeshBVH::new(b.mesh)));
        }
        Self { entries, meshes }
    }

    pub fn from_parts(entries: Vec<CatalogEntry>, meshes: Vec<TriangleMesh>) -> Result<Self, SceneGenError> {
        if entries.len() != meshes.len() {
            return Err(SceneGenError::InvalidCatalog("entry and mesh counts differ".into()));
        }
        let c = Self {
            entries,
            meshes: meshes.into_iter().map(|m| Arc::new(MeshBVH::new(m))).collect(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SceneGenError> {
        let mut ids = HashSet::new();
        for e in &self.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(SceneGenError::InvalidCatalog(format!("duplicate id '{}'", e.id)));
            }
            let positive = [e.top_face_area, e.volume, e.height]
                .iter()
                .all(|v| *v > 0.0 && v.is_finite())
                && e.nestable_open_volume.is_none_or(|v| v > 0.0)
                && e.opening_radius.is_none_or(|v| v > 0.0);
            if !positive {
                return Err(SceneGenError::InvalidCatalog(format!(
                    "'{}': areas and volumes must be positive",
                    e.id
                )));
            }
            if e.nestable_open_volume.is_some() != e.opening_radius.is_some() {
                return Err(SceneGenError::InvalidCatalog(format!(
                    "'{}': containers need both an open volume and an opening radius",
                    e.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    /// Reads a JSON list of entries; mesh paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, SceneGenError> {
        let io = |source| SceneGenError::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = std::fs::read_to_string(path).map_err(io)?;
        let entries: Vec<CatalogEntry> = serde_json::from_str(&text)
            .map_err(|e| SceneGenError::InvalidCatalog(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let meshes = entries
            .iter()
            .map(|e| load_mesh(&dir.join(&e.mesh)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(entries, meshes)
    }

    /// Writes `catalog.json` plus one OBJ per entry into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, SceneGenError> {
        let io = |p: &Path| {
            let p = p.to_path_buf();
            move |source| SceneGenError::Io { path: p, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for (e, m) in self.entries.iter().zip(&self.meshes) {
            let p = dir.join(&e.mesh);
            save_obj(m.mesh(), &p).map_err(io(&p))?;
        }
        let path = dir.join("catalog.json");
        let mut text = serde_json::to_string_pretty(&self.entries).expect("catalog serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(io(&path))?;
        Ok(path)
    }
}

fn describe(
    id: &str,
    mesh: &TriangleMesh,
    stackable: bool,
    flat_top: bool,
    cavity: Option<(f64, f64)>,
) -> CatalogEntry {
    let ext = mesh.bounding_box().extent();
    CatalogEntry {
        id: id.into(),
        mesh: format!("{id}.obj"),
        top_face_area: ext.x * ext.y,
        volume: mesh.signed_volume(),
        height: ext.z,
        stackable,
        flat_top,
        nestable_open_volume: cavity.map(|c| c.0),
        opening_radius: cavity.map(|c| c.1),
    }
}
