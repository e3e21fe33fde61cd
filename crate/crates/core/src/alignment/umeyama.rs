use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};

use super::AlignmentError;
use crate::pose::Sim3Transform;

/// Least-squares similarity `x ↦ σRx + t` taking `source[i]` onto `target[i]`.
pub fn umeyama_sim3(source: &[Point3<f64>], target: &[Point3<f64>]) -> Result<Sim3Transform, AlignmentError> {
    if source.len() != target.len() {
        return Err(AlignmentError::DegenerateConfiguration(format!(
            "{} source points vs {} target points",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(AlignmentError::DegenerateConfiguration(format!(
            "need at least 3 correspondences, got {}",
            source.len()
        )));
    }
    let n = source.len() as f64;
    let mu_s = source.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mu_t = target.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let ds = s.coords - mu_s;
        cov += (t.coords - mu_t) * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sv = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(var_s > 0.0) || !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(AlignmentError::DegenerateConfiguration(
            "correspondences are collinear or coincident".into(),
        ));
    }
    let mut d = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let sigma = (svd.singular_values.component_mul(&d.diagonal())).sum() / var_s;
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = mu_t - sigma * (rotation * mu_s);
    Sim3Transform::new(rotation, translation, sigma)
        .map_err(|e| AlignmentError::DegenerateConfiguration(format!("estimated similarity is invalid: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Similarity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                    rng.random_range(-50.0..50.0),
                )
            })
            .collect()
    }

    #[test]
    fn identity_on_equal_sets() {
        let s = cloud(20, 1);
        let t = umeyama_sim3(&s, &s).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        assert!(t.translation.norm() < 1e-9);
        assert!(t.rotation.angle() < 1e-9);
    }

    #[test]
    fn scaled_and_shifted() {
        let s = cloud(30, 2);
        let t: Vec<_> = s
            .iter()
            .map(|p| Point3::from(2.0 * p.coords + Vector3::new(1.0, 0.0, 0.0)))
            .collect();
        let est = umeyama_sim3(&s, &t).unwrap();
        assert!((est.scale - 2.0).abs() < 1e-9);
        assert!((est.translation - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
        assert!(est.rotation.angle() < 1e-9);
    }

    #[test]
    fn random_similarity_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let s = cloud(100, 100 + seed);
            let g = Sim3Transform::new(
                UnitQuaternion::from_scaled_axis(Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                )),
                Vector3::new(rng.random_range(-99.0..99.0), 3.0, -7.0),
                rng.random_range(0.5..2.0),
            )
            .unwrap();
            let t: Vec<_> = s.iter().map(|p| g.apply(p)).collect();
            let est = umeyama_sim3(&s, &t).unwrap();
            let rms = (s
                .iter()
                .zip(&t)
                .map(|(a, b)| (est.apply(a) - b).norm_squared())
                .sum::<f64>()
                / 100.0)
                .sqrt();
            assert!(rms < 1e-9, "rms {rms}");
        }
    }

    #[test]
    fn reflection_is_not_returned() {
        let s = cloud(40, 4);
        let t: Vec<_> = s.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let est = umeyama_sim3(&s, &t).unwrap();
        assert!(est.rotation.to_rotation_matrix().matrix().determinant() > 0.0);
    }

    #[test]
    fn collinear_is_degenerate() {
        let s: Vec<_> = (0..10).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(
            umeyama_sim3(&s, &s),
            Err(AlignmentError::DegenerateConfiguration(_))
        ));
        assert!(umeyama_sim3(&s[..2], &s[..2]).is_err());
    }
}
