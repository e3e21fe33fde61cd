use rayon::prelude::*;
use serde::Serialize;

use super::MetricError;
use crate::geometry::{render_posed, Camera, PosedMesh};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthErrorStats {
    /// Mean absolute depth error μ|δ| (mm).
    pub mean_abs: f64,
    /// Median absolute depth error (mm).
    pub median_abs: f64,
    /// Population standard deviation of the signed error (mm).
    pub std: f64,
    pub pixel_count: usize,
}

/// Signed `registered − scan` depth on every pixel where both renders hit and
/// the registered pixel shows an object, pooled over cameras in order.
pub fn depth_residuals(
    registered: &[PosedMesh],
    scan: &PosedMesh,
    cameras: &[Camera],
) -> Result<Vec<f64>, MetricError> {
    if cameras.is_empty() {
        return Err(MetricError::NoCameras);
    }
    let per_camera: Vec<Vec<f64>> = cameras
        .par_iter()
        .map(|cam| {
            let (reg, inst) = render_posed(registered, cam);
            let (scan_depth, _) = render_posed(std::slice::from_ref(scan), cam);
            reg.values
                .iter()
                .zip(&scan_depth.values)
                .zip(&inst.values)
                .filter(|((r, s), i)| **r > 0.0 && **s > 0.0 && **i > 0)
                .map(|((r, s), _)| r - s)
                .collect()
        })
        .collect();
    Ok(per_camera.concat())
}

pub fn depth_error(
    registered: &[PosedMesh],
    scan: &PosedMesh,
    cameras: &[Camera],
) -> Result<DepthErrorStats, MetricError> {
    let delta = depth_residuals(registered, scan, cameras)?;
    if delta.is_empty() {
        return Err(MetricError::NoValidPixels);
    }
    let n = delta.len() as f64;
    let mut abs: Vec<f64> = delta.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let m = abs.len() / 2;
    let median_abs = if abs.len() % 2 == 1 {
        abs[m]
    } else {
        0.5 * (abs[m - 1] + abs[m])
    };
    let mean = delta.iter().sum::<f64>() / n;
    let var = delta.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(DepthErrorStats {
        mean_abs: abs.iter().sum::<f64>() / n,
        median_abs,
        std: var.sqrt(),
        pixel_count: delta.len(),
    })
}
