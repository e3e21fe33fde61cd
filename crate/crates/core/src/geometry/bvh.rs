use std::sync::Arc;

use nalgebra::{Point3, Vector3};

use super::{Aabb, TriangleMesh};
use crate::pose::{Sim3Transform, Similarity};

pub const BVH_LEAF_SIZE: usize = 8;

/// Ray hits closer than this (in ray parameter units) are ignored.
const RAY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub point: Point3<f64>,
    pub face: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
}

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    // leaf: faces[start..start + count]; inner: children at `left` and `left + 1`
    start: u32,
    count: u32,
    left: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// Bounding-volume hierarchy over the faces of a mesh, median split on face
/// centroids along the widest axis.
#[derive(Debug, Clone)]
pub struct MeshBVH {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    faces: Vec<u32>,
    leaf_size: usize,
}

impl MeshBVH {
    pub fn new(mesh: TriangleMesh) -> Self {
        Self::with_leaf_size(mesh, BVH_LEAF_SIZE)
    }

    pub fn with_leaf_size(mesh: TriangleMesh, leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let n = mesh.face_count();
        let centroids: Vec<Point3<f64>> = (0..n)
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                Point3::from((a.coords + b.coords + c.coords) / 3.0)
            })
            .collect();
        let boxes: Vec<Aabb> = (0..n).map(|f| Aabb::from_points(&mesh.triangle(f))).collect();
        let mut bvh = MeshBVH {
            mesh,
            nodes: Vec::with_capacity(2 * n / leaf_size + 1),
            faces: (0..n as u32).collect(),
            leaf_size,
        };
        bvh.nodes.push(Node {
            bbox: Aabb::empty(),
            start: 0,
            count: 0,
            left: 0,
        });
        bvh.build(0, 0, n, &centroids, &boxes);
        bvh
    }

    fn build(&mut self, node: usize, start: usize, end: usize, centroids: &[Point3<f64>], boxes: &[Aabb]) {
        let mut bbox = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &f in &self.faces[start..end] {
            bbox = bbox.merge(&boxes[f as usize]);
            cbox.grow(&centroids[f as usize]);
        }
        self.nodes[node].bbox = bbox;
        let count = end - start;
        let ext = cbox.extent();
        if count <= self.leaf_size || ext.max() <= 0.0 {
            self.nodes[node].start = start as u32;
            self.nodes[node].count = count as u32;
            return;
        }
        let axis = ext.imax();
        let mid = start + count / 2;
        self.faces[start..end].select_nth_unstable_by(count / 2, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        self.nodes.push(Node {
            bbox: Aabb::empty(),
            start: 0,
            count: 0,
            left: 0,
        });
        self.nodes.push(Node {
            bbox: Aabb::empty(),
            start: 0,
            count: 0,
            left: 0,
        });
        self.nodes[node].left = left as u32;
        self.build(left, start, mid, centroids, boxes);
        self.build(left + 1, mid, end, centroids, boxes);
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn bounding_box(&self) -> Aabb {
        self.nodes[0].bbox
    }

    /// Face indices grouped per leaf, in traversal order. Exposed so the
    /// leaf-partition invariant can be checked.
    pub fn leaves(&self) -> Vec<&[u32]> {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| &self.faces[n.start as usize..(n.start + n.count) as usize])
            .collect()
    }

    /// Checks that each node's box contains its descendants' faces.
    pub fn boxes_are_nested(&self) -> bool {
        fn contains(outer: &Aabb, inner: &Aabb) -> bool {
            (0..3).all(|k| outer.min[k] <= inner.min[k] && outer.max[k] >= inner.max[k])
        }
        self.nodes.iter().all(|n| {
            if n.is_leaf() {
                self.faces[n.start as usize..(n.start + n.count) as usize]
                    .iter()
                    .all(|&f| contains(&n.bbox, &Aabb::from_points(&self.mesh.triangle(f as usize))))
            } else {
                contains(&n.bbox, &self.nodes[n.left as usize].bbox)
                    && contains(&n.bbox, &self.nodes[n.left as usize + 1].bbox)
            }
        })
    }

    /// Closest surface point to `query`.
    pub fn closest_point(&self, query: &Point3<f64>) -> ClosestHit {
        self.closest_point_within(query, f64::INFINITY)
            .expect("non-empty mesh always has a closest point")
    }

    /// Closest surface point if one lies within `max_distance`.
    pub fn closest_point_within(&self, query: &Point3<f64>, max_distance: f64) -> Option<ClosestHit> {
        let mut best_d2 = if max_distance.is_finite() {
            max_distance * max_distance
        } else {
            f64::INFINITY
        };
        let mut best: Option<(Point3<f64>, usize)> = None;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bbox.distance_squared(query)));
        while let Some((ni, d2)) = stack.pop() {
            if d2 > best_d2 {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.is_leaf() {
                for &f in &self.faces[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = self.mesh.triangle(f as usize);
                    let p = closest_point_on_triangle(query, &a, &b, &c);
                    let d = (p - query).norm_squared();
                    // ties resolve to the lowest face index for determinism
                    if d < best_d2 || (d == best_d2 && best.is_some_and(|(_, bf)| (f as usize) < bf)) {
                        best_d2 = d;
                        best = Some((p, f as usize));
                    }
                }
            } else {
                let l = node.left;
                let dl = self.nodes[l as usize].bbox.distance_squared(query);
                let dr = self.nodes[l as usize + 1].bbox.distance_squared(query);
                // push the farther child first so the nearer one is popped next
                if dl <= dr {
                    stack.push((l + 1, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((l + 1, dr));
                }
            }
        }
        best.map(|(point, face)| ClosestHit {
            point,
            face,
            distance: best_d2.sqrt(),
        })
    }

    /// Nearest intersection along a ray. `direction` need not be normalized;
    /// the returned `t` is the Euclidean distance from `origin`.
    pub fn raycast(&self, origin: &Point3<f64>, direction: &Vector3<f64>) -> Option<RayHit> {
        let len = direction.norm();
        if !(len > 0.0) {
            return None;
        }
        self.raycast_param(origin, &(direction / len), f64::INFINITY)
    }

    /// Nearest intersection with parameter in `(eps, t_max]`, `t` in units of
    /// `direction`.
    pub fn raycast_param(&self, origin: &Point3<f64>, direction: &Vector3<f64>, t_max: f64) -> Option<RayHit> {
        let inv = direction.map(|d| 1.0 / d);
        let mut best_t = t_max;
        let mut best: Option<usize> = None;
        let mut stack: Vec<u32> = Vec::with_capacity(64);
        if self.nodes[0].bbox.ray_entry(origin, &inv, best_t).is_some() {
            stack.push(0);
        }
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            match node.bbox.ray_entry(origin, &inv, best_t) {
                Some(_) => {}
                None => continue,
            }
            if node.is_leaf() {
                for &f in &self.faces[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = self.mesh.triangle(f as usize);
                    if let Some(t) = ray_triangle(origin, direction, &a, &b, &c) {
                        if t < best_t || (t == best_t && best.is_some_and(|bf| (f as usize) < bf)) {
                            best_t = t;
                            best = Some(f as usize);
                        }
                    }
                }
            } else {
                let l = node.left;
                let tl = self.nodes[l as usize].bbox.ray_entry(origin, &inv, best_t);
                let tr = self.nodes[l as usize + 1].bbox.ray_entry(origin, &inv, best_t);
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        if a <= b {
                            stack.push(l + 1);
                            stack.push(l);
                        } else {
                            stack.push(l);
                            stack.push(l + 1);
                        }
                    }
                    (Some(_), None) => stack.push(l),
                    (None, Some(_)) => stack.push(l + 1),
                    (None, None) => {}
                }
            }
        }
        best.map(|face| RayHit { t: best_t, face })
    }

    /// Every intersection along the ray as `(t, facing)` where `facing` is
    /// `+1` when the ray leaves through the face and `-1` when it enters.
    pub fn ray_hits_all(&self, origin: &Point3<f64>, direction: &Vector3<f64>) -> Vec<(f64, i8)> {
        let inv = direction.map(|d| 1.0 / d);
        let mut hits = Vec::new();
        let mut stack: Vec<u32> = vec![0];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bbox.ray_entry(origin, &inv, f64::INFINITY).is_none() {
                continue;
            }
            if node.is_leaf() {
                for &f in &self.faces[node.start as usize..(node.start + node.count) as usize] {
                    let [a, b, c] = self.mesh.triangle(f as usize);
                    if let Some(t) = ray_triangle(origin, direction, &a, &b, &c) {
                        let facing = if self.mesh.face_normals()[f as usize].dot(direction) >= 0.0 {
                            1
                        } else {
                            -1
                        };
                        hits.push((t, facing));
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.left + 1);
            }
        }
        hits
    }

    /// Point-in-solid test: parity of surface crossings along +x, +y and +z,
    /// decided by majority vote. Open meshes degrade gracefully.
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let votes = [Vector3::x(), Vector3::y(), Vector3::z()]
            .iter()
            .filter(|d| crossing_count(&mut self.ray_hits_all(p, d)) % 2 == 1)
            .count();
        votes >= 2
    }
}

/// Counts distinct surface crossings. Coincident hits with the same facing
/// (a ray through a shared edge or vertex) count once; coincident hits with
/// opposite facing (a grazing contact) both count.
pub(crate) fn crossing_count(hits: &mut [(f64, i8)]) -> usize {
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut count = 0;
    let mut i = 0;
    while i < hits.len() {
        let (t, s) = hits[i];
        let tol = 1e-9 * t.abs().max(1.0);
        let mut seen_pos = s > 0;
        let mut seen_neg = s < 0;
        let mut j = i + 1;
        while j < hits.len() && hits[j].0 - t <= tol {
            seen_pos |= hits[j].1 > 0;
            seen_neg |= hits[j].1 < 0;
            j += 1;
        }
        count += seen_pos as usize + seen_neg as usize;
        i = j;
    }
    count
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Möller–Trumbore intersection; returns the ray parameter if it exceeds the
/// self-intersection epsilon.
pub fn ray_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let scale = e1.norm() * e2.norm() * dir.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    (t > RAY_EPS).then_some(t)
}

/// A shared mesh hierarchy placed in the world by a similarity transform.
/// Queries map into the local frame instead of rebuilding the hierarchy.
#[derive(Debug, Clone)]
pub struct PosedMesh {
    bvh: Arc<MeshBVH>,
    pose: Sim3Transform,
    inverse: Sim3Transform,
    world_box: Aabb,
}

impl PosedMesh {
    pub fn new(bvh: Arc<MeshBVH>, pose: &impl Similarity) -> Self {
        let pose = pose.to_sim3();
        let world_box = Aabb::from_points(&bvh.mesh().vertices().iter().map(|v| pose.apply(v)).collect::<Vec<_>>());
        Self {
            inverse: pose.inverse(),
            bvh,
            pose,
            world_box,
        }
    }

    pub fn bvh(&self) -> &Arc<MeshBVH> {
        &self.bvh
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.bvh.mesh()
    }

    pub fn pose(&self) -> &Sim3Transform {
        &self.pose
    }

    pub fn bounding_box(&self) -> Aabb {
        self.world_box
    }

    /// The mesh with vertices in world coordinates.
    pub fn world_mesh(&self) -> TriangleMesh {
        self.mesh().transformed(&self.pose)
    }

    pub fn surface_area(&self) -> f64 {
        self.mesh().surface_area() * self.pose.scale * self.pose.scale
    }

    pub fn closest_point(&self, query: &Point3<f64>) -> ClosestHit {
        let local = self.inverse.apply(query);
        let h = self.bvh.closest_point(&local);
        ClosestHit {
            point: self.pose.apply(&h.point),
            face: h.face,
            distance: h.distance * self.pose.scale,
        }
    }

    pub fn closest_point_within(&self, query: &Point3<f64>, max_distance: f64) -> Option<ClosestHit> {
        if self.world_box.distance_squared(query) > max_distance * max_distance {
            return None;
        }
        let local = self.inverse.apply(query);
        self.bvh
            .closest_point_within(&local, max_distance / self.pose.scale)
            .map(|h| ClosestHit {
                point: self.pose.apply(&h.point),
                face: h.face,
                distance: h.distance * self.pose.scale,
            })
    }

    /// World-frame unit normal of a face.
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        self.pose.apply_normal(&self.mesh().face_normals()[face])
    }

    /// Nearest hit with `t` measured in world units along `direction`
    /// (which need not be normalized) and bounded by `t_max`.
    pub fn raycast_param(&self, origin: &Point3<f64>, direction: &Vector3<f64>, t_max: f64) -> Option<RayHit> {
        let o = self.inverse.apply(origin);
        let d = self.inverse.scale * (self.inverse.rotation * direction);
        self.bvh.raycast_param(&o, &d, t_max)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let b = self.world_box;
        if (0..3).any(|k| p[k] < b.min[k] || p[k] > b.max[k]) {
            return false;
        }
        self.bvh.contains(&self.inverse.apply(p))
    }
}
