use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::geometry::TriangleMesh;
use crate::pose::{Pose7DoF, Similarity};

/// One-to-one correspondence between predicted and ground-truth objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(pred, gt)` pairs in increasing pred order.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    /// Sum of matched centroid distances, in mm.
    pub cost: f64,
}

/// Minimum-cost perfect assignment on a square matrix (row → column).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // potentials and augmenting paths, 1-based with column 0 as sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// World-space area centroid and diameter of a posed mesh.
pub fn placed_centroid(mesh: &TriangleMesh, pose: &Pose7DoF) -> (Point3<f64>, f64) {
    (pose.apply(&mesh.area_centroid()), mesh.diameter() * pose.sigma())
}

/// Optimal assignment by centroid distance. A pair farther apart than
/// `gate_factor` times the ground-truth object's diameter is left unmatched.
pub fn match_objects(pred: &[(TriangleMesh, Pose7DoF)], gt: &[(TriangleMesh, Pose7DoF)], gate_factor: f64) -> Matching {
    let pc: Vec<_> = pred.iter().map(|(m, p)| placed_centroid(m, p)).collect();
    let gc: Vec<_> = gt.iter().map(|(m, p)| placed_centroid(m, p)).collect();
    match_centroids(&pc, &gc, gate_factor)
}

/// [`match_objects`] on precomputed `(centroid, diameter)` pairs.
pub fn match_centroids(pred: &[(Point3<f64>, f64)], gt: &[(Point3<f64>, f64)], gate_factor: f64) -> Matching {
    let n = pred.len().max(gt.len());
    let dist = |i: usize, j: usize| (pred[i].0 - gt[j].0).norm();
    let gated = |i: usize, j: usize| dist(i, j) > gate_factor * gt[j].1;
    // gated pairs cost more than leaving both sides unmatched
    let big = 1.0
        + pred
            .iter()
            .flat_map(|a| gt.iter().map(move |b| (a.0 - b.0).norm()))
            .fold(0.0, f64::max)
            * (n as f64 + 1.0);
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i >= pred.len() || j >= gt.len() {
                        0.0
                    } else if gated(i, j) {
                        big
                    } else {
                        dist(i, j)
                    }
                })
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost);
    let mut m = Matching {
        pairs: Vec::new(),
        unmatched_pred: Vec::new(),
        unmatched_gt: Vec::new(),
        cost: 0.0,
    };
    let mut gt_used = vec![false; gt.len()];
    for (i, &j) in assignment.iter().enumerate().take(pred.len()) {
        if j < gt.len() && !gated(i, j) {
            m.pairs.push((i, j));
            m.cost += dist(i, j);
            gt_used[j] = true;
        } else {
            m.unmatched_pred.push(i);
        }
    }
    m.unmatched_gt = (0..gt.len()).filter(|&j| !gt_used[j]).collect();
    m
}
