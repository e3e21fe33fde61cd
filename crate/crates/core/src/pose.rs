//! Rigid and similarity transforms, 7-DoF poses and quaternion metrics.
//!
//! Quaternions are stored `(w, x, y, z)`. A transform maps a point `p` to
//! `sigma * R(q) * p + t`; rigid transforms have `sigma = 1`.

use nalgebra::{Matrix3, Matrix4, Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("scale must be positive and finite, got {0}")]
    ScaleNonPositive(f64),
    #[error("quaternion norm {0} is too small to normalize")]
    QuaternionDegenerate(f64),
    #[error("non-finite pose component")]
    NonFinite,
}

/// Anything that acts on points as `sigma * R * p + t`.
pub trait Similarity {
    fn rotation(&self) -> UnitQuaternion<f64>;
    fn translation(&self) -> Vector3<f64>;
    fn scale(&self) -> f64 {
        1.0
    }

    fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale() * (self.rotation() * p.coords) + self.translation())
    }

    /// Rotates a direction; scale and translation do not apply to normals.
    fn apply_normal(&self, n: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * n
    }

    fn to_sim3(&self) -> Sim3Transform {
        Sim3Transform {
            rotation: self.rotation(),
            translation: self.translation(),
            scale: self.scale(),
        }
    }

    fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        let r: Matrix3<f64> = self.rotation().to_rotation_matrix().into_inner() * self.scale();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation());
        m
    }
}

/// Element of SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let r_inv = self.rotation.inverse();
        RigidTransform {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    /// Left-multiplied increment `Exp(omega)` rotating about `pivot`, followed
    /// by a translation `v`: `p ↦ Exp(ω)(T p − c) + c + v`.
    pub fn retract_about(&self, omega: &Vector3<f64>, v: &Vector3<f64>, pivot: &Point3<f64>) -> RigidTransform {
        let dr = UnitQuaternion::from_scaled_axis(*omega);
        let c = pivot.coords;
        RigidTransform {
            rotation: dr * self.rotation,
            translation: dr * (self.translation - c) + c + v,
        }
    }

    /// Left retraction about the world origin.
    pub fn retract(&self, delta: &[f64; 6]) -> RigidTransform {
        self.retract_about(
            &Vector3::new(delta[0], delta[1], delta[2]),
            &Vector3::new(delta[3], delta[4], delta[5]),
            &Point3::origin(),
        )
    }
}

impl Similarity for RigidTransform {
    fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }
    fn translation(&self) -> Vector3<f64> {
        self.translation
    }
}

/// Element of Sim(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3Transform {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Sim3Transform {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self, PoseError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(PoseError::ScaleNonPositive(scale));
        }
        Ok(Self {
            rotation,
            translation,
            scale,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &impl Similarity) -> Sim3Transform {
        Sim3Transform {
            rotation: self.rotation * other.rotation(),
            translation: self.scale * (self.rotation * other.translation()) + self.translation,
            scale: self.scale * other.scale(),
        }
    }

    pub fn inverse(&self) -> Sim3Transform {
        let r_inv = self.rotation.inverse();
        let s_inv = 1.0 / self.scale;
        Sim3Transform {
            rotation: r_inv,
            translation: -(s_inv * (r_inv * self.translation)),
            scale: s_inv,
        }
    }

    pub fn rigid_part(&self) -> RigidTransform {
        RigidTransform::new(self.rotation, self.translation)
    }
}

impl Similarity for Sim3Transform {
    fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }
    fn translation(&self) -> Vector3<f64> {
        self.translation
    }
    fn scale(&self) -> f64 {
        self.scale
    }
}

impl<T: Similarity> Similarity for &T {
    fn rotation(&self) -> UnitQuaternion<f64> {
        (*self).rotation()
    }
    fn translation(&self) -> Vector3<f64> {
        (*self).translation()
    }
    fn scale(&self) -> f64 {
        (*self).scale()
    }
}

/// 7-DoF object pose `(q, t, sigma)` as exchanged in manifests and reports.
///
/// JSON form: `{"q":[w,x,y,z],"t":[x,y,z],"sigma":s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose7DoF {
    q: UnitQuaternion<f64>,
    t: Vector3<f64>,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    q: [f64; 4],
    t: [f64; 3],
    #[serde(default = "one")]
    sigma: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<PoseRepr> for Pose7DoF {
    type Error = PoseError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let q = Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
        Pose7DoF::from_parts(q, Vector3::from(r.t), r.sigma)
    }
}

impl From<Pose7DoF> for PoseRepr {
    fn from(p: Pose7DoF) -> Self {
        PoseRepr {
            q: p.q_wxyz(),
            t: [p.t.x, p.t.y, p.t.z],
            sigma: p.sigma,
        }
    }
}

impl Pose7DoF {
    pub fn new(q: UnitQuaternion<f64>, t: Vector3<f64>, sigma: f64) -> Result<Self, PoseError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(PoseError::ScaleNonPositive(sigma));
        }
        if !t.iter().all(|v| v.is_finite()) || !q.coords.iter().all(|v| v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        Ok(Self { q, t, sigma })
    }

    /// Normalizes a raw quaternion, rejecting near-zero norms.
    pub fn from_parts(q: Quaternion<f64>, t: Vector3<f64>, sigma: f64) -> Result<Self, PoseError> {
        let n = q.norm();
        if !n.is_finite() {
            return Err(PoseError::NonFinite);
        }
        if n < 1e-6 {
            return Err(PoseError::QuaternionDegenerate(n));
        }
        // already-unit input is kept bit-exact so that load/save round trips are stable
        let q = if (n - 1.0).abs() <= 1e-12 { q } else { q / n };
        Self::new(UnitQuaternion::new_unchecked(q), t, sigma)
    }

    pub fn identity() -> Self {
        Self {
            q: UnitQuaternion::identity(),
            t: Vector3::zeros(),
            sigma: 1.0,
        }
    }

    pub fn q(&self) -> UnitQuaternion<f64> {
        self.q
    }

    pub fn t(&self) -> Vector3<f64> {
        self.t
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q_wxyz(&self) -> [f64; 4] {
        let c = self.q.quaternion();
        [c.w, c.i, c.j, c.k]
    }

    pub fn with_translation(mut self, t: Vector3<f64>) -> Self {
        self.t = t;
        self
    }

    pub fn rigid_part(&self) -> RigidTransform {
        RigidTransform::new(self.q, self.t)
    }
}

impl Similarity for Pose7DoF {
    fn rotation(&self) -> UnitQuaternion<f64> {
        self.q
    }
    fn translation(&self) -> Vector3<f64> {
        self.t
    }
    fn scale(&self) -> f64 {
        self.sigma
    }
}

impl From<RigidTransform> for Pose7DoF {
    fn from(r: RigidTransform) -> Self {
        Pose7DoF {
            q: r.rotation,
            t: r.translation,
            sigma: 1.0,
        }
    }
}

impl From<Sim3Transform> for Pose7DoF {
    fn from(s: Sim3Transform) -> Self {
        decompose_sim3(&s)
    }
}

/// Splits a similarity into `(q, t, sigma)` with the quaternion sign fixed to `w ≥ 0`.
pub fn decompose_sim3(transform: &Sim3Transform) -> Pose7DoF {
    let mut q = *transform.rotation.quaternion();
    if q.w < 0.0 {
        q = -q;
    }
    Pose7DoF {
        q: UnitQuaternion::new_unchecked(q),
        t: transform.translation,
        sigma: transform.scale,
    }
}

/// `1 − ⟨q, q̂⟩²` on renormalized inputs; invariant to the sign of either argument.
pub fn quaternion_loss(q: &Quaternion<f64>, q_hat: &Quaternion<f64>) -> f64 {
    let d = q.coords.dot(&q_hat.coords) / (q.norm() * q_hat.norm());
    (1.0 - d * d).clamp(0.0, 1.0)
}

/// Angle of the relative rotation, in `[0, π]`.
pub fn geodesic_angle(q: &Quaternion<f64>, q_hat: &Quaternion<f64>) -> f64 {
    let a = UnitQuaternion::from_quaternion(*q);
    let b = UnitQuaternion::from_quaternion(*q_hat);
    let rel = b.inverse() * a;
    let r = rel.quaternion();
    // atan2 keeps precision near zero where acos would not.
    2.0 * r.imag().norm().atan2(r.w.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn rot_z90() -> Quaternion<f64> {
        Quaternion::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2)
    }

    #[test]
    fn apply_examples() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(Sim3Transform::identity().apply(&p), p);

        let r = RigidTransform::new(UnitQuaternion::from_quaternion(rot_z90()), Vector3::zeros());
        let out = r.apply(&Point3::new(1.0, 0.0, 0.0));
        assert!((out - Point3::new(0.0, 1.0, 0.0)).norm() < 1e-9);

        let s = Sim3Transform::new(UnitQuaternion::identity(), Vector3::new(1.0, 0.0, 0.0), 2.0).unwrap();
        assert!((s.apply(&Point3::new(1.0, 1.0, 1.0)) - Point3::new(3.0, 2.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn quaternion_loss_examples() {
        let q = rot_z90();
        assert_eq!(quaternion_loss(&q, &q), 0.0);
        assert_eq!(quaternion_loss(&-q, &q), 0.0);
        let id = Quaternion::identity();
        assert!((quaternion_loss(&id, &q) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn geodesic_examples() {
        let q = rot_z90();
        assert_eq!(geodesic_angle(&q, &q), 0.0);
        assert!(geodesic_angle(&q, &-q) < 1e-15);
        assert!((geodesic_angle(&Quaternion::identity(), &q) - FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn decompose_examples() {
        let p = decompose_sim3(&Sim3Transform::identity());
        assert_eq!(p.q_wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.t(), Vector3::zeros());
        assert_eq!(p.sigma(), 1.0);

        let s = Sim3Transform::new(UnitQuaternion::identity(), Vector3::zeros(), 3.0).unwrap();
        let p = decompose_sim3(&s);
        assert_eq!(p.sigma(), 3.0);
        assert_eq!(p.q_wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn decompose_canonicalizes_sign() {
        let q = UnitQuaternion::new_unchecked(Quaternion::new(-0.5, 0.5, 0.5, 0.5));
        let s = Sim3Transform::new(q, Vector3::new(1.0, 2.0, 3.0), 0.7).unwrap();
        let p = decompose_sim3(&s);
        assert!(p.q_wxyz()[0] >= 0.0);
        let x = Point3::new(0.3, -2.0, 5.0);
        assert!((p.apply(&x) - s.apply(&x)).norm() < 1e-12);
    }

    #[test]
    fn pose_json_roundtrip() {
        let p = Pose7DoF::new(
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            Vector3::new(1.0, -2.0, 3.5),
            1.25,
        )
        .unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"q\":["));
        let back: Pose7DoF = serde_json::from_str(&s).unwrap();
        assert_eq!(back.t(), p.t());
        assert_eq!(back.sigma(), p.sigma());
        assert!((back.q().coords - p.q().coords).norm() < 1e-15);

        let rigid: Pose7DoF = serde_json::from_str(r#"{"q":[1,0,0,0],"t":[0,0,0]}"#).unwrap();
        assert_eq!(rigid.sigma(), 1.0);
        assert!(serde_json::from_str::<Pose7DoF>(r#"{"q":[1,0,0,0],"t":[0,0,0],"sigma":0}"#).is_err());
        assert!(serde_json::from_str::<Pose7DoF>(r#"{"q":[0,0,0,0],"t":[0,0,0]}"#).is_err());
    }

    #[test]
    fn retract_zero_is_identity() {
        let t = RigidTransform::new(
            UnitQuaternion::from_euler_angles(0.4, 0.1, -0.2),
            Vector3::new(3.0, 2.0, 1.0),
        );
        let r = t.retract(&[0.0; 6]);
        assert_eq!(r.rotation, t.rotation);
        assert_eq!(r.translation, t.translation);
    }

    fn arb_quat() -> impl Strategy<Value = Quaternion<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-zero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z).normalize())
    }

    fn arb_sim3() -> impl Strategy<Value = Sim3Transform> {
        (arb_quat(), prop::array::uniform3(-100.0..100.0f64), -1.0..1.0f64).prop_map(|(q, t, ls)| {
            Sim3Transform::new(UnitQuaternion::new_unchecked(q), Vector3::from(t), ls.exp()).unwrap()
        })
    }

    fn arb_point() -> impl Strategy<Value = Point3<f64>> {
        prop::array::uniform3(-50.0..50.0f64).prop_map(Point3::from)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn loss_sign_invariant(q in arb_quat(), qh in arb_quat()) {
            prop_assert_eq!(quaternion_loss(&q, &qh), quaternion_loss(&-q, &qh));
        }

        #[test]
        fn loss_zero_iff_angle_zero(q in arb_quat(), qh in arb_quat(), same in any::<bool>(), flip in any::<bool>()) {
            let qh = if same { if flip { -q } else { q } } else { qh };
            let l = quaternion_loss(&q, &qh);
            let a = geodesic_angle(&q, &qh);
            prop_assert_eq!(l <= 1e-9, a <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&a));
        }
    }

    proptest! {
        #[test]
        fn compose_matches_sequential_apply(a in arb_sim3(), b in arb_sim3(), p in arb_point()) {
            let lhs = a.compose(&b).apply(&p);
            let rhs = a.apply(&b.apply(&p));
            prop_assert!((lhs - rhs).norm() < 1e-9 * (1.0 + rhs.coords.norm()));
        }

        #[test]
        fn inverse_roundtrip(a in arb_sim3(), p in arb_point()) {
            let back = a.inverse().apply(&a.apply(&p));
            prop_assert!((back - p).norm() < 1e-9);
            let r = a.rigid_part();
            prop_assert!((r.inverse().apply(&r.apply(&p)) - p).norm() < 1e-9);
        }

        #[test]
        fn decompose_recompose(a in arb_sim3(), pts in prop::collection::vec(arb_point(), 20)) {
            let p = decompose_sim3(&a);
            prop_assert!(p.q_wxyz()[0] >= 0.0);
            for x in &pts {
                prop_assert!((p.apply(x) - a.apply(x)).norm() < 1e-9);
            }
            let m = a.to_matrix();
            let mp = m * x_h(&pts[0]);
            prop_assert!((Point3::new(mp.x, mp.y, mp.z) - a.apply(&pts[0])).norm() < 1e-9);
        }
    }

    fn x_h(p: &Point3<f64>) -> nalgebra::Vector4<f64> {
        p.to_homogeneous()
    }
}
