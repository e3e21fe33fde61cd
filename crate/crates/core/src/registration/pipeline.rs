use super::{register, register_stage1, RegistrationConfig, RegistrationError, RegistrationResult};
use crate::geometry::{MeshBVH, TriangleMesh};
use crate::pose::RigidTransform;
use crate::registry::Registry;

/// A complete registration strategy, selectable by name.
pub trait RegistrationPipeline: Send + Sync {
    fn description(&self) -> &'static str;

    fn run(
        &self,
        object: &TriangleMesh,
        scene: &MeshBVH,
        init: &RigidTransform,
        cfg: &RegistrationConfig,
    ) -> Result<RegistrationResult, RegistrationError>;
}

/// Robust distance term only.
#[derive(Debug, Default)]
pub struct DistanceOnly;

impl RegistrationPipeline for DistanceOnly {
    fn description(&self) -> &'static str {
        "robust closest-point distance refinement"
    }

    fn run(
        &self,
        object: &TriangleMesh,
        scene: &MeshBVH,
        init: &RigidTransform,
        cfg: &RegistrationConfig,
    ) -> Result<RegistrationResult, RegistrationError> {
        register_stage1(object, scene, init, cfg)
    }
}

/// Distance refinement followed by the normal-aware stage.
#[derive(Debug, Default)]
pub struct DistanceThenNormals;

impl RegistrationPipeline for DistanceThenNormals {
    fn description(&self) -> &'static str {
        "distance refinement, then normal-consistency weighted refinement"
    }

    fn run(
        &self,
        object: &TriangleMesh,
        scene: &MeshBVH,
        init: &RigidTransform,
        cfg: &RegistrationConfig,
    ) -> Result<RegistrationResult, RegistrationError> {
        register(object, scene, init, cfg)
    }
}

/// Built-in pipelines: `distance-only` and `distance+normals`.
pub fn pipelines() -> Registry<dyn RegistrationPipeline> {
    let mut r: Registry<dyn RegistrationPipeline> = Registry::new("registration pipeline");
    r.register("distance-only", Box::new(DistanceOnly));
    r.register("distance+normals", Box::new(DistanceThenNormals));
    r
}
