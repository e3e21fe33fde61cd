use nalgebra::{Point3, Vector3};

use super::GeometryError;
use crate::pose::Similarity;

/// Faces with area at or below this are rejected as degenerate (mm²).
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3<f64>>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && self.max.x >= other.min.x
            && self.min.y <= other.max.y
            && self.max.y >= other.min.y
            && self.min.z <= other.max.z
            && self.max.z >= other.min.z
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Slab test. Returns the parametric entry distance if the ray hits the box
    /// within `[0, t_max]`.
    pub fn ray_entry(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for k in 0..3 {
            let mut ta = (self.min[k] - origin[k]) * inv_dir[k];
            let mut tb = (self.max[k] - origin[k]) * inv_dir[k];
            // 0 * inf produces NaN when the origin lies on a slab plane of a parallel ray.
            if ta.is_nan() {
                ta = f64::NEG_INFINITY;
            }
            if tb.is_nan() {
                tb = f64::INFINITY;
            }
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Indexed triangle surface in millimetres with derived unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    face_normals: Vec<Vector3<f64>>,
    face_areas: Vec<f64>,
    vertex_normals: Vec<Vector3<f64>>,
}

impl TriangleMesh {
    /// Builds a mesh, validating indices and rejecting degenerate faces.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        if faces.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(GeometryError::IndexOutOfRange {
                    face: fi,
                    vertex_count: n,
                });
            }
        }
        if let Some(p) = vertices.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite(format!("vertex {p:?}")));
        }
        let mut face_normals = Vec::with_capacity(faces.len());
        let mut face_areas = Vec::with_capacity(faces.len());
        let mut vertex_normals = vec![Vector3::zeros(); n];
        for (fi, f) in faces.iter().enumerate() {
            let [a, b, c] = f.map(|i| vertices[i as usize]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if area <= MIN_FACE_AREA {
                return Err(GeometryError::DegenerateFace { face: fi, area });
            }
            let normal = cross / (2.0 * area);
            for &i in f {
                // area-weighted accumulation
                vertex_normals[i as usize] += cross * 0.5;
            }
            face_normals.push(normal);
            face_areas.push(area);
        }
        for vn in &mut vertex_normals {
            let len = vn.norm();
            if len > 0.0 {
                *vn /= len;
            }
        }
        Ok(Self {
            vertices,
            faces,
            face_normals,
            face_areas,
            vertex_normals,
        })
    }

    /// Like [`TriangleMesh::new`] but silently drops degenerate faces, as
    /// scanner exports routinely contain a few slivers.
    pub fn new_lenient(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(GeometryError::IndexOutOfRange {
                    face: fi,
                    vertex_count: n,
                });
            }
        }
        let kept: Vec<[u32; 3]> = faces
            .into_iter()
            .filter(|f| {
                let [a, b, c] = f.map(|i| vertices[i as usize]);
                0.5 * (b - a).cross(&(c - a)).norm() > MIN_FACE_AREA
            })
            .collect();
        Self::new(vertices, kept)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_normals(&self) -> &[Vector3<f64>] {
        &self.face_normals
    }

    pub fn vertex_normals(&self) -> &[Vector3<f64>] {
        &self.vertex_normals
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.face_areas[face]
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }

    pub fn surface_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i as usize].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Bounding-box diagonal, used as the object "diameter" throughout.
    pub fn diameter(&self) -> f64 {
        self.bounding_box().diagonal()
    }

    /// Area-weighted surface centroid.
    pub fn area_centroid(&self) -> Point3<f64> {
        let mut acc = Vector3::zeros();
        let mut total = 0.0;
        for (fi, f) in self.faces.iter().enumerate() {
            let [a, b, c] = f.map(|i| self.vertices[i as usize].coords);
            acc += (a + b + c) * (self.face_areas[fi] / 3.0);
            total += self.face_areas[fi];
        }
        Point3::from(acc / total)
    }

    /// Returns a copy with every vertex mapped through `transform`.
    /// Reflections are not representable, so face winding is preserved.
    pub fn transformed(&self, transform: &impl Similarity) -> TriangleMesh {
        let vertices = self.vertices.iter().map(|p| transform.apply(p)).collect();
        TriangleMesh::new(vertices, self.faces.clone()).expect("similarity preserves mesh validity")
    }

    pub fn with_flipped_faces(&self) -> TriangleMesh {
        let faces = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        TriangleMesh::new(self.vertices.clone(), faces).expect("flip preserves validity")
    }

    /// Concatenates meshes into one (no vertex welding).
    pub fn merge<'a>(meshes: impl IntoIterator<Item = &'a TriangleMesh>) -> Result<TriangleMesh, GeometryError> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for m in meshes {
            let base = vertices.len() as u32;
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| f.map(|i| i + base)));
        }
        TriangleMesh::new(vertices, faces)
    }
}
