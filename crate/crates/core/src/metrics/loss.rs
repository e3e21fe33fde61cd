use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::recon::{chamfer, chamfer_gradient};
use super::MetricError;
use crate::pose::{quaternion_loss, Pose7DoF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_cd: f64,
    pub w_t: f64,
    pub w_s: f64,
    pub w_ip: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_cd: 0.1,
            w_t: 100.0,
            w_s: 100.0,
            w_ip: 10.0,
        }
    }
}

/// One object's shape samples and pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectState {
    pub samples: Vec<Point3<f64>>,
    pub pose: Pose7DoF,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub cd: f64,
    pub t: f64,
    pub s: f64,
    pub ip: f64,
}

/// Gradient of the weighted total with respect to one predicted object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectGradient {
    pub t: Vector3<f64>,
    pub sigma: f64,
    /// With respect to a left rotation vector ε, `q ↦ Exp(ε) ⊗ q`.
    pub rotation: Vector3<f64>,
    /// With respect to the raw quaternion components `(w, x, y, z)`.
    pub q: [f64; 4],
    pub samples: Vec<Vector3<f64>>,
}

fn check_lengths(pred: &[ObjectState], gt: &[ObjectState]) -> Result<(), MetricError> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    Ok(())
}

/// Weighted pose and shape objective averaged over matched objects.
pub fn combined_loss(pred: &[ObjectState], gt: &[ObjectState], w: &LossWeights) -> Result<LossBreakdown, MetricError> {
    check_lengths(pred, gt)?;
    let n = pred.len() as f64;
    let (mut cd, mut t, mut s, mut ip) = (0.0, 0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        cd += chamfer(&p.samples, &g.samples)?;
        t += (p.pose.t() - g.pose.t()).norm_squared();
        s += (p.pose.sigma() - g.pose.sigma()).powi(2);
        ip += quaternion_loss(p.pose.q().quaternion(), g.pose.q().quaternion());
    }
    let (cd, t, s, ip) = (cd / n, t / n, s / n, ip / n);
    Ok(LossBreakdown {
        total: w.w_cd * cd + w.w_t * t + w.w_s * s + w.w_ip * ip,
        cd,
        t,
        s,
        ip,
    })
}

pub fn combined_loss_gradient(
    pred: &[ObjectState],
    gt: &[ObjectState],
    w: &LossWeights,
) -> Result<(LossBreakdown, Vec<ObjectGradient>), MetricError> {
    let loss = combined_loss(pred, gt, w)?;
    let n = pred.len() as f64;
    let grads = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let q = p.pose.q().into_inner();
            let qh = g.pose.q().into_inner();
            let d = q.coords.dot(&qh.coords);
            let (u, uh) = (q.imag(), qh.imag());
            let dd = 0.5 * (q.w * uh - qh.w * u + u.cross(&uh));
            let scale = w.w_ip / n * -2.0 * d;
            Ok(ObjectGradient {
                t: w.w_t * 2.0 * (p.pose.t() - g.pose.t()) / n,
                sigma: w.w_s * 2.0 * (p.pose.sigma() - g.pose.sigma()) / n,
                rotation: scale * dd,
                q: [qh.w, qh.i, qh.j, qh.k].map(|c| scale * c),
                samples: chamfer_gradient(&p.samples, &g.samples)?
                    .into_iter()
                    .map(|v| w.w_cd / n * v)
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok((loss, grads))
}
