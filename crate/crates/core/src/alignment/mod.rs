//! Similarity alignment between scenes and objects: closed-form Sim(3)
//! estimation, ICP with restarts, object matching, and extraction of
//! ground-truth pose targets.

mod icp;
mod matching;
mod supervision;
mod umeyama;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;

pub use icp::{icp_sim3, icp_sim3_restarts, ClosestPointTarget, IcpResult};
pub use matching::{hungarian, match_centroids, match_objects, placed_centroid, Matching};
pub use supervision::{
    align_scenes, gt_pose_supervision, match_aligned, supervise_objects, SceneObjects, Supervision, SupervisionTarget,
    MATCH_GATE,
};
pub use umeyama::umeyama_sim3;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("invalid ICP config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Magnitudes of the perturbations applied to restarts after the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestartPerturbation {
    /// Rotation about a random axis, in degrees.
    pub degrees: f64,
    /// Translation in a random direction, as a fraction of the source diameter.
    pub translation_fraction: f64,
    /// Scale factor drawn as `exp(U(−log_scale, log_scale))`.
    pub log_scale: f64,
}

impl Default for RestartPerturbation {
    fn default() -> Self {
        Self {
            degrees: 10.0,
            translation_fraction: 0.05,
            log_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once an iteration improves the RMS by less than this (mm).
    pub convergence_tol: f64,
    pub restarts: usize,
    pub restart_perturbation: RestartPerturbation,
    /// Surface samples drawn from a mesh source.
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-4,
            restarts: 3,
            restart_perturbation: RestartPerturbation::default(),
            sample_count: 2000,
            seed: 0,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        let bad = |m: &str| Err(AlignmentError::InvalidConfig(m.into()));
        if self.restarts < 1 {
            return bad("restarts must be at least 1");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if self.sample_count < 3 {
            return bad("sample_count must be at least 3");
        }
        let p = &self.restart_perturbation;
        if !(p.degrees >= 0.0 && p.translation_fraction >= 0.0 && p.log_scale >= 0.0) {
            return bad("restart perturbation magnitudes must be non-negative");
        }
        Ok(())
    }
}
