//! Two-stage object-to-scan registration.
//!
//! Stage 1 minimizes `Σ ρ(r_i²)` where `r_i` is the distance from a
//! transformed object sample to its closest point on the scan. Stage 2 runs
//! the same solver on residuals weighted by normal agreement, which keeps
//! thin-walled objects from settling between two scan walls.

mod pipeline;
pub mod robust;

use nalgebra::{Matrix3, Matrix6, Point3, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{sample_surface, GeometryError, MeshBVH, SurfaceSample, TriangleMesh};
use crate::pose::{RigidTransform, Similarity};

pub use pipeline::{pipelines, DistanceOnly, DistanceThenNormals, RegistrationPipeline};
pub use robust::{soft_l1, Corrector, RobustLoss, SoftL1, Trivial};

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("invalid registration config: {0}")]
    InvalidConfig(String),
    #[error("registration diverged: {0}")]
    Diverged(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no sample passes the normal gate (cosine >= {threshold}); the initial pose is likely wrong")]
    AllWeightsZero { threshold: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Object surface samples per stage.
    pub sample_count: usize,
    /// Outer iterations per stage; each recomputes closest points.
    pub iterations_per_stage: usize,
    /// Soft-ℓ1 scale in mm.
    pub f_scale: f64,
    /// Minimum cosine between object and scan normals in stage 2.
    pub normal_threshold: f64,
    pub seed: u64,
    /// Damping retries per outer iteration before the step is abandoned.
    pub max_damping_retries: usize,
    /// A final median residual above this (mm) is reported as divergence.
    pub reject_residual: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            sample_count: 500,
            iterations_per_stage: 20,
            f_scale: 4.5,
            normal_threshold: 0.7,
            seed: 0,
            max_damping_retries: 10,
            reject_residual: 10.0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: String| Err(RegistrationError::InvalidConfig(m));
        if self.sample_count < 3 {
            return bad(format!("sample_count must be at least 3, got {}", self.sample_count));
        }
        if self.iterations_per_stage < 1 {
            return bad("iterations_per_stage must be at least 1".into());
        }
        if !(self.f_scale > 0.0 && self.f_scale.is_finite()) {
            return bad(format!("f_scale must be positive, got {}", self.f_scale));
        }
        if !(-1.0..=1.0).contains(&self.normal_threshold) {
            return bad(format!(
                "normal_threshold must lie in [-1, 1], got {}",
                self.normal_threshold
            ));
        }
        if self.max_damping_retries < 1 {
            return bad("max_damping_retries must be at least 1".into());
        }
        if self.reject_residual.is_nan() || self.reject_residual <= 0.0 {
            return bad(format!(
                "reject_residual must be positive, got {}",
                self.reject_residual
            ));
        }
        Ok(())
    }
}

/// Which residual weighting a solve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Distance,
    NormalAware,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub pose: RigidTransform,
    pub stage1_pose: RigidTransform,
    /// Cost at the end of stage 1 (equal to `final_cost` for a single-stage run).
    pub stage1_cost: f64,
    pub final_cost: f64,
    /// Mean unweighted closest-point distance at the final pose, in mm.
    pub mean_residual: f64,
    pub median_residual: f64,
    /// Fraction of samples passing the normal gate at the final pose.
    pub inlier_fraction: f64,
    /// Cost at the start of every outer iteration of the last stage, then the final cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
}

/// Closest-point distance of every transformed sample to the scene.
pub fn residuals_distance(pose: &RigidTransform, samples: &[SurfaceSample], scene: &MeshBVH) -> Vec<f64> {
    samples
        .par_iter()
        .map(|s| scene.closest_point(&pose.apply(&s.point)).distance)
        .collect()
}

/// Foot points and weights for one outer iteration.
struct Linearization {
    feet: Vec<Point3<f64>>,
    faces: Vec<usize>,
    distances: Vec<f64>,
    weights: Vec<f64>,
    cosines: Vec<f64>,
}

fn linearize(
    pose: &RigidTransform,
    samples: &[SurfaceSample],
    scene: &MeshBVH,
    stage: Stage,
    threshold: f64,
) -> Linearization {
    let normals = scene.mesh().face_normals();
    let per: Vec<(Point3<f64>, usize, f64, f64)> = samples
        .par_iter()
        .map(|s| {
            let hit = scene.closest_point(&pose.apply(&s.point));
            let cos = (pose.rotation * s.normal).dot(&normals[hit.face]);
            (hit.point, hit.face, hit.distance, cos)
        })
        .collect();
    let mut lin = Linearization {
        feet: Vec::with_capacity(per.len()),
        faces: Vec::with_capacity(per.len()),
        distances: Vec::with_capacity(per.len()),
        weights: Vec::with_capacity(per.len()),
        cosines: Vec::with_capacity(per.len()),
    };
    for (foot, face, d, cos) in per {
        lin.feet.push(foot);
        lin.faces.push(face);
        lin.distances.push(d);
        lin.cosines.push(cos);
        lin.weights.push(match stage {
            Stage::Distance => 1.0,
            Stage::NormalAware if cos >= threshold => cos,
            Stage::NormalAware => 0.0,
        });
    }
    lin
}

impl Linearization {
    /// `Σ ρ((w_i r_i)²)`, summed in sample order.
    fn cost(&self, loss: &dyn RobustLoss) -> f64 {
        self.distances
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| loss.evaluate((w * r) * (w * r))[0])
            .sum()
    }
}

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Gauss–Newton system for the weighted distance residuals in the left chart
/// `(ω, v)` about `pivot`, with every foot point held fixed.
fn normal_equations(
    loss: &dyn RobustLoss,
    pose: &RigidTransform,
    samples: &[SurfaceSample],
    lin: &Linearization,
    scene: &MeshBVH,
    pivot: &Point3<f64>,
) -> (Matrix6<f64>, Vector6<f64>) {
    let normals = scene.mesh().face_normals();
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for i in 0..samples.len() {
        let w = lin.weights[i];
        if w == 0.0 {
            continue;
        }
        let x = pose.apply(&samples[i].point);
        let r = lin.distances[i];
        // gradient of ‖x − y‖ in x; on the surface fall back to the face normal
        let dir = if r > 1e-9 {
            (x - lin.feet[i]) / r
        } else {
            normals[lin.faces[i]]
        };
        let dx_dw = -skew(&(x - pivot));
        let row = dx_dw.transpose() * dir;
        let mut jac = [row.x * w, row.y * w, row.z * w, dir.x * w, dir.y * w, dir.z * w];
        let mut res = [w * r];
        let sq = res[0] * res[0];
        let corrector = Corrector::new(sq, loss.evaluate(sq));
        corrector.correct_jacobian(&res, &mut jac, 6);
        corrector.correct_residual(&mut res);
        let j = Vector6::from_column_slice(&jac);
        h += j * j.transpose();
        g += j * res[0];
    }
    (h, g)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct StageOutcome {
    pose: RigidTransform,
    cost: f64,
    mean_residual: f64,
    median_residual: f64,
    inlier_fraction: f64,
    history: Vec<f64>,
    iterations: usize,
}

fn solve(
    samples: &[SurfaceSample],
    scene: &MeshBVH,
    init: &RigidTransform,
    cfg: &RegistrationConfig,
    stage: Stage,
) -> Result<StageOutcome, RegistrationError> {
    let loss = SoftL1 { f_scale: cfg.f_scale };
    let threshold = cfg.normal_threshold;
    let mut pose = *init;
    let mut lin = linearize(&pose, samples, scene, stage, threshold);
    let first = lin.feet[0];
    if lin.feet.iter().all(|y| (y - first).norm() <= 1e-9) {
        return Err(RegistrationError::DegenerateInput(
            "every sample has the same closest scene point".into(),
        ));
    }
    let mut cost = lin.cost(&loss);
    let mut lambda = 1e-4;
    let mut history = Vec::with_capacity(cfg.iterations_per_stage + 1);
    let mut iterations = 0;
    for it in 0..cfg.iterations_per_stage {
        if lin.weights.iter().all(|&w| w == 0.0) {
            return Err(RegistrationError::AllWeightsZero { threshold });
        }
        if !cost.is_finite() {
            return Err(RegistrationError::Diverged(format!(
                "non-finite cost at iteration {it}"
            )));
        }
        history.push(cost);
        iterations = it + 1;
        if cost == 0.0 {
            break;
        }

        let (sum, count) = samples
            .iter()
            .zip(&lin.weights)
            .filter(|(_, &w)| w > 0.0)
            .fold((Vector3::zeros(), 0usize), |(acc, n), (s, _)| {
                (acc + pose.apply(&s.point).coords, n + 1)
            });
        let pivot = Point3::from(sum / count as f64);
        let (h, g) = normal_equations(&loss, &pose, samples, &lin, scene, &pivot);
        let rot_scale = ((h[(0, 0)] + h[(1, 1)] + h[(2, 2)]) / 3.0).max(1e-12);
        let trans_scale = ((h[(3, 3)] + h[(4, 4)] + h[(5, 5)]) / 3.0).max(1e-12);
        let scaling = Vector6::new(rot_scale, rot_scale, rot_scale, trans_scale, trans_scale, trans_scale);

        let mut accepted = None;
        for _ in 0..cfg.max_damping_retries {
            let damped = h + Matrix6::from_diagonal(&(scaling * lambda));
            if let Some(ch) = damped.cholesky() {
                let delta = ch.solve(&(-g));
                let candidate = pose.retract_about(
                    &Vector3::new(delta[0], delta[1], delta[2]),
                    &Vector3::new(delta[3], delta[4], delta[5]),
                    &pivot,
                );
                let trial = linearize(&candidate, samples, scene, stage, threshold);
                let trial_cost = trial.cost(&loss);
                if trial_cost.is_finite() && trial_cost < cost {
                    accepted = Some((candidate, trial, trial_cost));
                    lambda = (lambda / 10.0).max(1e-12);
                    break;
                }
            }
            lambda *= 10.0;
        }
        match accepted {
            Some((p, l, c)) => {
                pose = p;
                lin = l;
                cost = c;
            }
            // no damping value decreases the cost: the pose is stationary
            None => break,
        }
    }

    if !cost.is_finite() {
        return Err(RegistrationError::Diverged("non-finite final cost".into()));
    }
    history.push(cost);
    let n = samples.len() as f64;
    let mean_residual = lin.distances.iter().sum::<f64>() / n;
    let median_residual = median(&lin.distances);
    if median_residual > cfg.reject_residual {
        return Err(RegistrationError::Diverged(format!(
            "median residual {median_residual:.3} mm exceeds the reject threshold {} mm",
            cfg.reject_residual
        )));
    }
    let inliers = lin.cosines.iter().filter(|&&c| c >= cfg.normal_threshold).count();
    Ok(StageOutcome {
        pose,
        cost,
        mean_residual,
        median_residual,
        inlier_fraction: inliers as f64 / n,
        history,
        iterations,
    })
}

fn draw_samples(object: &TriangleMesh, cfg: &RegistrationConfig) -> Result<Vec<SurfaceSample>, RegistrationError> {
    cfg.validate()?;
    Ok(sample_surface(object, cfg.sample_count, cfg.seed)?)
}

fn single_stage(
    object: &TriangleMesh,
    scene: &MeshBVH,
    init: &RigidTransform,
    cfg: &RegistrationConfig,
    stage: Stage,
) -> Result<RegistrationResult, RegistrationError> {
    let samples = draw_samples(object, cfg)?;
    let out = solve(&samples, scene, init, cfg, stage)?;
    Ok(RegistrationResult {
        pose: out.pose,
        stage1_pose: match stage {
            Stage::Distance => out.pose,
            Stage::NormalAware => *init,
        },
        stage1_cost: out.cost,
        final_cost: out.cost,
        mean_residual: out.mean_residual,
        median_residual: out.median_residual,
        inlier_fraction: out.inlier_fraction,
        cost_history: out.history,
        iterations: out.iterations,
    })
}

/// Robust distance-only refinement of `init`. `object` is in its local frame,
/// `scene` in world coordinates.
pub fn register_stage1(
    object: &TriangleMesh,
    scene: &MeshBVH,
    init: &RigidTransform,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    single_stage(object, scene, init, cfg, Stage::Distance)
}

/// Normal-aware refinement starting from `stage1_pose`.
pub fn register_stage2(
    object: &TriangleMesh,
    scene: &MeshBVH,
    stage1_pose: &RigidTransform,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    single_stage(object, scene, stage1_pose, cfg, Stage::NormalAware)
}

/// Stage 1 followed by stage 2 on the same sample set.
pub fn register(
    object: &TriangleMesh,
    scene: &MeshBVH,
    init: &RigidTransform,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult, RegistrationError> {
    let samples = draw_samples(object, cfg)?;
    let first = solve(&samples, scene, init, cfg, Stage::Distance)?;
    let second = solve(&samples, scene, &first.pose, cfg, Stage::NormalAware)?;
    Ok(RegistrationResult {
        pose: second.pose,
        stage1_pose: first.pose,
        stage1_cost: first.cost,
        final_cost: second.cost,
        mean_residual: second.mean_residual,
        median_residual: second.median_residual,
        inlier_fraction: second.inlier_fraction,
        cost_history: second.history,
        iterations: second.iterations,
    })
}
