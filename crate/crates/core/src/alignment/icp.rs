use nalgebra::{Point3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{umeyama_sim3, AlignmentError, IcpConfig};
use crate::geometry::{Aabb, MeshBVH, PointIndex, PosedMesh};
use crate::pose::{Sim3Transform, Similarity};

/// Anything that can answer closest-point queries in world coordinates.
pub trait ClosestPointTarget: Sync {
    fn closest(&self, query: &Point3<f64>) -> Point3<f64>;
}

impl ClosestPointTarget for MeshBVH {
    fn closest(&self, query: &Point3<f64>) -> Point3<f64> {
        self.closest_point(query).point
    }
}

impl ClosestPointTarget for PosedMesh {
    fn closest(&self, query: &Point3<f64>) -> Point3<f64> {
        self.closest_point(query).point
    }
}

impl ClosestPointTarget for PointIndex {
    fn closest(&self, query: &Point3<f64>) -> Point3<f64> {
        self.points()[self.nearest(query).0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: Sim3Transform,
    /// RMS closest-point distance at `transform`, in mm.
    pub rms: f64,
    /// RMS before each re-estimate, ending with the final RMS.
    pub rms_history: Vec<f64>,
    pub iterations: usize,
}

fn correspond(source: &[Point3<f64>], target: &dyn ClosestPointTarget, t: &Sim3Transform) -> (Vec<Point3<f64>>, f64) {
    let pairs: Vec<(Point3<f64>, f64)> = source
        .par_iter()
        .map(|p| {
            let x = t.apply(p);
            let y = target.closest(&x);
            (y, (x - y).norm_squared())
        })
        .collect();
    let sum: f64 = pairs.iter().map(|p| p.1).sum();
    let rms = (sum / source.len() as f64).sqrt();
    (pairs.into_iter().map(|p| p.0).collect(), rms)
}

/// Similarity ICP from a single initialization: alternate closest points and
/// a closed-form re-estimate until the RMS improves by less than the tolerance.
pub fn icp_sim3(
    source: &[Point3<f64>],
    target: &dyn ClosestPointTarget,
    init: &Sim3Transform,
    cfg: &IcpConfig,
) -> Result<IcpResult, AlignmentError> {
    cfg.validate()?;
    let mut t = *init;
    let (mut corr, mut rms) = correspond(source, target, &t);
    let mut history = vec![rms];
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let next = umeyama_sim3(source, &corr)?;
        let (next_corr, next_rms) = correspond(source, target, &next);
        iterations += 1;
        if !(next_rms <= rms) {
            // floating-point noise at the optimum; keep the better estimate
            break;
        }
        let gain = rms - next_rms;
        t = next;
        corr = next_corr;
        rms = next_rms;
        history.push(rms);
        if gain < cfg.convergence_tol {
            break;
        }
    }
    Ok(IcpResult {
        transform: t,
        rms,
        rms_history: history,
        iterations,
    })
}

/// Runs `cfg.restarts` ICPs and returns the one with the lowest RMS. Restart 0
/// starts at `init`; the others start at `init` perturbed about the
/// transformed source centroid by the configured rotation, translation and
/// log-scale magnitudes.
pub fn icp_sim3_restarts(
    source: &[Point3<f64>],
    target: &dyn ClosestPointTarget,
    init: &Sim3Transform,
    cfg: &IcpConfig,
) -> Result<(IcpResult, Vec<f64>), AlignmentError> {
    cfg.validate()?;
    let placed: Vec<Point3<f64>> = source.iter().map(|p| init.apply(p)).collect();
    let centroid = Point3::from(placed.iter().map(|p| p.coords).sum::<Vector3<f64>>() / placed.len() as f64);
    let diameter = Aabb::from_points(&placed).diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![*init];
    for _ in 1..cfg.restarts {
        starts.push(perturb(init, &centroid, diameter, cfg, &mut rng));
    }
    let mut best: Option<IcpResult> = None;
    let mut all = Vec::with_capacity(starts.len());
    for s in &starts {
        let r = icp_sim3(source, target, s, cfg)?;
        all.push(r.rms);
        if best.as_ref().is_none_or(|b| r.rms < b.rms) {
            best = Some(r);
        }
    }
    Ok((best.expect("at least one restart"), all))
}

fn perturb(
    init: &Sim3Transform,
    centroid: &Point3<f64>,
    diameter: f64,
    cfg: &IcpConfig,
    rng: &mut ChaCha8Rng,
) -> Sim3Transform {
    let axis = random_unit(rng);
    let dir = random_unit(rng);
    let p = &cfg.restart_perturbation;
    let rot = UnitQuaternion::from_axis_angle(&axis, p.degrees.to_radians());
    let scale = rng.random_range(-p.log_scale..=p.log_scale).exp();
    let shift = dir.into_inner() * (p.translation_fraction * diameter);
    // x ↦ s·R(x − c) + c + shift, applied after init
    let c = centroid.coords;
    let delta = Sim3Transform {
        rotation: rot,
        translation: c + shift - scale * (rot * c),
        scale,
    };
    delta.compose(init)
}

fn random_unit(rng: &mut ChaCha8Rng) -> Unit<Vector3<f64>> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{primitives, sample_surface};
    use crate::pose::geodesic_angle;

    fn blob_points(n: usize) -> (MeshBVH, Vec<Point3<f64>>) {
        let m = primitives::asymmetric_blob(Vector3::new(40.0, 25.0, 15.0), 48, 24);
        let pts = sample_surface(&m, n, 5).unwrap().into_iter().map(|s| s.point).collect();
        (MeshBVH::new(m), pts)
    }

    fn truth() -> Sim3Transform {
        Sim3Transform::new(
            UnitQuaternion::from_euler_angles(0.4, -0.3, 1.2),
            Vector3::new(30.0, -10.0, 80.0),
            1.3,
        )
        .unwrap()
    }

    #[test]
    fn recovers_perturbed_similarity_on_mesh() {
        let (bvh, pts) = blob_points(2000);
        let g = truth();
        let target = MeshBVH::new(bvh.mesh().transformed(&g));
        let diameter = bvh.mesh().diameter() * g.scale;
        let c = g.apply(&Point3::from(bvh.mesh().area_centroid().coords));
        let rot =
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, -1.0, 0.5)), 10f64.to_radians());
        let delta = Sim3Transform {
            rotation: rot,
            translation: c.coords + Vector3::new(0.0, 0.05 * diameter, 0.0) - 1.1 * (rot * c.coords),
            scale: 1.1,
        };
        let init = delta.compose(&g);
        let cfg = IcpConfig {
            convergence_tol: 1e-9,
            max_iterations: 200,
            ..Default::default()
        };
        let r = icp_sim3(&pts, &target, &init, &cfg).unwrap();
        assert!(geodesic_angle(&r.transform.rotation, &g.rotation) < 1e-3);
        assert!((r.transform.translation - g.translation).norm() < 1e-3 * diameter);
        assert!((r.transform.scale - g.scale).abs() / g.scale <= 1e-3);
        for w in r.rms_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn exact_init_converges_immediately() {
        let (bvh, pts) = blob_points(500);
        let g = truth();
        let target = MeshBVH::new(bvh.mesh().transformed(&g));
        let r = icp_sim3(&pts, &target, &g, &IcpConfig::default()).unwrap();
        assert!(r.iterations <= 2);
        assert!(r.rms <= 1e-7);
    }

    #[test]
    fn point_cloud_target() {
        let (_, pts) = blob_points(800);
        let g = truth();
        let index = PointIndex::new(pts.iter().map(|p| g.apply(p)).collect());
        let r = icp_sim3(&pts, &index, &g, &IcpConfig::default()).unwrap();
        assert!(r.rms < 1e-9);
    }

    #[test]
    fn restarts_return_minimum() {
        // a cube is symmetric, so different starts settle in different minima
        let cube = primitives::cube(Point3::origin(), 20.0);
        let pts: Vec<_> = sample_surface(&cube, 600, 1)
            .unwrap()
            .into_iter()
            .map(|s| s.point)
            .collect();
        let target = MeshBVH::new(cube.clone());
        let init = Sim3Transform::new(
            UnitQuaternion::from_euler_angles(0.5, 0.6, 0.2),
            Vector3::new(3.0, 0.0, 0.0),
            1.0,
        )
        .unwrap();
        let cfg = IcpConfig {
            restarts: 3,
            seed: 7,
            ..Default::default()
        };
        let (best, all) = icp_sim3_restarts(&pts, &target, &init, &cfg).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|&r| best.rms <= r));
    }
}
