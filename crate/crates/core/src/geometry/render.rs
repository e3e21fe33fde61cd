use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeometryError, MeshBVH, PosedMesh, TriangleMesh};
use crate::pose::{Pose7DoF, RigidTransform, Similarity};

/// Pinhole camera. Camera frame: +x right, +y down, +z forward; `pose` maps
/// camera coordinates to world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr", into = "CameraRepr")]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    pose: Pose7DoF,
}

impl TryFrom<CameraRepr> for Camera {
    type Error = GeometryError;
    fn try_from(r: CameraRepr) -> Result<Self, Self::Error> {
        if (r.pose.sigma() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidParameter(
                "camera pose must be rigid (sigma = 1)".into(),
            ));
        }
        Camera::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, r.pose.rigid_part())
    }
}

impl From<Camera> for CameraRepr {
    fn from(c: Camera) -> Self {
        CameraRepr {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            pose: c.pose.into(),
        }
    }
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: RigidTransform,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidParameter("focal lengths must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidParameter(
                "resolution must be at least 1x1".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Camera at `eye` looking at `target`; `up` is a world hint for image "up".
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let z = (target - eye).normalize();
        let mut x = z.cross(&up);
        if x.norm() < 1e-9 {
            // looking along `up`; pick any perpendicular
            x = z.cross(&Vector3::y());
            if x.norm() < 1e-9 {
                x = z.cross(&Vector3::x());
            }
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
        let rot = nalgebra::UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m));
        Camera::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            RigidTransform::new(rot, eye.coords),
        )
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.pose.translation)
    }

    /// World-frame ray through the centre of pixel `(u, v)`, scaled so that
    /// its camera-z component is 1: the ray parameter equals depth.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vector3<f64> {
        let d = Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        self.pose.apply_normal(&d)
    }
}

/// Depth along the camera z axis (mm), 0 where nothing is hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// 1-based object index per pixel, 0 for background.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u16>,
}

impl DepthMap {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    /// `DEPTHMAP v1` header, dimensions line, then little-endian f32 values.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "DEPTHMAP v1\n{} {}\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for &d in &self.values {
            buf.extend_from_slice(&(d as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(r: impl Read) -> Result<Self, GeometryError> {
        let mut r = BufReader::new(r);
        let perr = |m: &str| GeometryError::Parse {
            path: "<depth map>".into(),
            message: m.into(),
        };
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != "DEPTHMAP v1" {
            return Err(perr("missing DEPTHMAP v1 header"));
        }
        line.clear();
        r.read_line(&mut line)?;
        let dims: Vec<usize> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
        let [width, height] = dims[..] else {
            return Err(perr("bad dimensions line"));
        };
        let mut buf = vec![0u8; width * height * 4];
        r.read_exact(&mut buf).map_err(|_| perr("truncated payload"))?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Self { width, height, values })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

impl InstanceMap {
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.values[v * self.width + u]
    }

    /// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.values.len() * 2);
        for &v in &self.values {
            buf.extend_from_slice(&v.to_be_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(r: impl Read) -> Result<Self, GeometryError> {
        let mut r = BufReader::new(r);
        let perr = |m: &str| GeometryError::Parse {
            path: "<instance map>".into(),
            message: m.into(),
        };
        let mut header = Vec::new();
        // magic, width, height, maxval separated by whitespace
        let mut tokens: Vec<String> = Vec::new();
        while tokens.len() < 4 {
            header.clear();
            if r.read_until(b'\n', &mut header)? == 0 {
                return Err(perr("truncated header"));
            }
            let text = String::from_utf8_lossy(&header);
            let text = text.split('#').next().unwrap_or("");
            tokens.extend(text.split_whitespace().map(str::to_owned));
        }
        if tokens[0] != "P5" || tokens[3] != "65535" {
            return Err(perr("expected P5 with maxval 65535"));
        }
        let width: usize = tokens[1].parse().map_err(|_| perr("bad width"))?;
        let height: usize = tokens[2].parse().map_err(|_| perr("bad height"))?;
        let mut buf = vec![0u8; width * height * 2];
        r.read_exact(&mut buf).map_err(|_| perr("truncated payload"))?;
        let values = buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        Ok(Self { width, height, values })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Renders already-posed meshes. Ties in depth go to the lower index.
pub fn render_posed(objects: &[PosedMesh], camera: &Camera) -> (DepthMap, InstanceMap) {
    let origin = camera.center();
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<(Vec<f64>, Vec<u16>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut depth = vec![0.0; w];
            let mut inst = vec![0u16; w];
            for u in 0..w {
                let dir = camera.pixel_ray(u, v);
                let mut best = f64::INFINITY;
                for (k, obj) in objects.iter().enumerate() {
                    if let Some(hit) = obj.raycast_param(&origin, &dir, best) {
                        if hit.t < best {
                            best = hit.t;
                            inst[u] = (k + 1) as u16;
                        }
                    }
                }
                if best.is_finite() {
                    depth[u] = best;
                }
            }
            (depth, inst)
        })
        .collect();
    let mut depth = DepthMap {
        width: w,
        height: h,
        values: Vec::with_capacity(w * h),
    };
    let mut inst = InstanceMap {
        width: w,
        height: h,
        values: Vec::with_capacity(w * h),
    };
    for (d, i) in rows {
        depth.values.extend(d);
        inst.values.extend(i);
    }
    (depth, inst)
}

/// Renders meshes placed by 7-DoF poses.
pub fn render_depth(scene: &[(TriangleMesh, Pose7DoF)], camera: &Camera) -> (DepthMap, InstanceMap) {
    let posed: Vec<PosedMesh> = scene
        .iter()
        .map(|(m, p)| PosedMesh::new(Arc::new(MeshBVH::new(m.clone())), p))
        .collect();
    render_posed(&posed, camera)
}
