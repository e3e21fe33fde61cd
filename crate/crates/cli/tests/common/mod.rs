#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::{Point3, UnitQuaternion, Vector3};
use scenereg_core::geometry::io::save_obj;
use scenereg_core::geometry::{primitives, Camera, TriangleMesh};
use scenereg_core::manifest::{ManifestObject, SceneManifest};
use scenereg_core::pose::Pose7DoF;

pub fn scenereg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenereg"))
        .args(args)
        .env_remove("SCENEREG_THREADS")
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub struct FixtureObject {
    pub id: &'static str,
    pub mesh: TriangleMesh,
    pub pose: Pose7DoF,
    pub init_pose: Option<Pose7DoF>,
}

pub fn pose(yaw: f64, t: [f64; 3]) -> Pose7DoF {
    Pose7DoF::new(UnitQuaternion::from_euler_angles(0.0, 0.0, yaw), Vector3::from(t), 1.0).unwrap()
}

/// Three well-separated objects: an asymmetric blob, a box and a cup.
pub fn objects() -> Vec<FixtureObject> {
    vec![
        FixtureObject {
            id: "blob",
            mesh: primitives::asymmetric_blob(Vector3::new(30.0, 20.0, 12.0), 32, 16),
            pose: pose(0.2, [0.0, 0.0, 12.0]),
            init_pose: None,
        },
        FixtureObject {
            id: "box",
            mesh: primitives::cuboid(Point3::new(-15.0, -10.0, 0.0), Point3::new(15.0, 10.0, 25.0)),
            pose: pose(0.5, [80.0, 10.0, 0.0]),
            init_pose: None,
        },
        FixtureObject {
            id: "cup",
            mesh: primitives::cup(20.0, 40.0, 2.5, 3.0, 24),
            pose: pose(1.0, [-70.0, 20.0, 0.0]),
            init_pose: None,
        },
    ]
}

pub fn overhead_cameras() -> Vec<Camera> {
    let target = Point3::new(0.0, 10.0, 10.0);
    [[0.0, -150.0, 250.0], [150.0, 50.0, 250.0], [-150.0, 50.0, 250.0]]
        .iter()
        .map(|e| Camera::look_at(Point3::from(*e), target, Vector3::z(), 120.0, 96, 72).unwrap())
        .collect()
}

/// Writes meshes, an optional merged scan and `name` into `dir`.
pub fn write_scene(
    dir: &Path,
    name: &str,
    objects: &[FixtureObject],
    scan: bool,
    cameras: Option<Vec<Camera>>,
) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let mut entries = Vec::new();
    for o in objects {
        let rel = format!("{}.obj", o.id);
        save_obj(&o.mesh, &dir.join(&rel)).unwrap();
        entries.push(ManifestObject {
            id: o.id.into(),
            mesh: rel,
            pose: o.pose,
            init_pose: o.init_pose,
        });
    }
    let mut m = SceneManifest::new(entries);
    if scan {
        let world: Vec<TriangleMesh> = objects.iter().map(|o| o.mesh.transformed(&o.pose)).collect();
        save_obj(&TriangleMesh::merge(&world).unwrap(), &dir.join("scan.obj")).unwrap();
        m.scan = Some("scan.obj".into());
    }
    m.cameras = cameras;
    let path = dir.join(name);
    m.save(&path).unwrap();
    path
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Validates `path` against `schemas/<name>.schema.json` at the repository root.
pub fn assert_schema(name: &str, path: &Path) {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    let schema = read_json(&root.join(format!("{name}.schema.json")));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let value = read_json(path);
    let errors: Vec<String> = validator
        .iter_errors(&value)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(
        errors.is_empty(),
        "{} does not match {name}: {errors:?}",
        path.display()
    );
}
