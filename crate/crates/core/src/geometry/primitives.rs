//! Parametric test and catalog geometry. Every closed primitive is watertight
//! and outward oriented.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use nalgebra::{Point3, UnitQuaternion, Vector3};

use super::TriangleMesh;
use crate::pose::RigidTransform;

pub fn unit_cube() -> TriangleMesh {
    cuboid(Point3::origin(), Point3::new(1.0, 1.0, 1.0))
}

/// Axis-aligned box between two corners, two triangles per side.
pub fn cuboid(min: Point3<f64>, max: Point3<f64>) -> TriangleMesh {
    let v = |i: u32| {
        Point3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let vertices = (0..8).map(v).collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3], // z-
        [4, 5, 6],
        [5, 7, 6], // z+
        [0, 1, 4],
        [1, 5, 4], // y-
        [2, 6, 3],
        [3, 6, 7], // y+
        [0, 4, 2],
        [2, 4, 6], // x-
        [1, 3, 5],
        [3, 7, 5], // x+
    ];
    TriangleMesh::new(vertices, faces).expect("valid cuboid")
}

/// Cube with side `side` centred at `center`.
pub fn cube(center: Point3<f64>, side: f64) -> TriangleMesh {
    let h = Vector3::repeat(side / 2.0);
    cuboid(center - h, center + h)
}

/// Unit square `[0,1]²` in the z = 0 plane, normal +z.
pub fn unit_square() -> TriangleMesh {
    rectangle(Point3::new(0.5, 0.5, 0.0), 1.0, 1.0)
}

/// Axis-aligned rectangle in a z = const plane, normal +z.
pub fn rectangle(center: Point3<f64>, width: f64, depth: f64) -> TriangleMesh {
    let (hx, hy) = (width / 2.0, depth / 2.0);
    let vertices = vec![
        center + Vector3::new(-hx, -hy, 0.0),
        center + Vector3::new(hx, -hy, 0.0),
        center + Vector3::new(hx, hy, 0.0),
        center + Vector3::new(-hx, hy, 0.0),
    ];
    TriangleMesh::new(vertices, vec![[0, 1, 2], [0, 2, 3]]).expect("valid rectangle")
}

/// Regular grid of `n × n` quads over a square, normal +z. Useful where a
/// plane needs many small faces.
pub fn grid_plane(center: Point3<f64>, side: f64, n: usize) -> TriangleMesh {
    let n = n.max(1);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point3::new(
                center.x - side / 2.0 + side * i as f64 / n as f64,
                center.y - side / 2.0 + side * j as f64 / n as f64,
                center.z,
            ));
        }
    }
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, faces).expect("valid grid")
}

pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> TriangleMesh {
    let rings = rings.max(2);
    let profile: Vec<(f64, f64)> = (0..=rings)
        .map(|k| {
            let a = PI * k as f64 / rings as f64;
            (radius * a.sin(), -radius * a.cos())
        })
        .collect();
    revolve(&profile, segments)
}

/// Surface of revolution about +z from a closed `(r, z)` profile loop.
///
/// Profile points with `r == 0` collapse to a single pole vertex; edges lying
/// on the axis contribute no faces. The result is flipped if needed so that it
/// is outward oriented.
pub fn revolve(profile: &[(f64, f64)], segments: usize) -> TriangleMesh {
    let segments = segments.max(3);
    let mut vertices = Vec::new();
    // first vertex index of each profile point, and whether it is a pole
    let mut rings: Vec<(u32, bool)> = Vec::with_capacity(profile.len());
    for &(r, z) in profile {
        let start = vertices.len() as u32;
        if r.abs() < 1e-12 {
            vertices.push(Point3::new(0.0, 0.0, z));
            rings.push((start, true));
        } else {
            for k in 0..segments {
                let th = TAU * k as f64 / segments as f64;
                vertices.push(Point3::new(r * th.cos(), r * th.sin(), z));
            }
            rings.push((start, false));
        }
    }
    let seg = segments as u32;
    let mut faces = Vec::new();
    let n = profile.len();
    for i in 0..n {
        let (a, a_pole) = rings[i];
        let (b, b_pole) = rings[(i + 1) % n];
        for k in 0..seg {
            let k1 = (k + 1) % seg;
            match (a_pole, b_pole) {
                (true, true) => {}
                (true, false) => faces.push([a, b + k, b + k1]),
                (false, true) => faces.push([a + k, b, a + k1]),
                (false, false) => {
                    faces.push([a + k, b + k, b + k1]);
                    faces.push([a + k, b + k1, a + k1]);
                }
            }
        }
    }
    let mesh = TriangleMesh::new(vertices, faces).expect("valid profile");
    if mesh.signed_volume() < 0.0 {
        mesh.with_flipped_faces()
    } else {
        mesh
    }
}

/// Solid cylinder standing on z = 0.
pub fn cylinder(radius: f64, height: f64, segments: usize) -> TriangleMesh {
    revolve(&[(0.0, 0.0), (radius, 0.0), (radius, height), (0.0, height)], segments)
}

/// Open-topped cylindrical container with a closed base, standing on z = 0.
pub fn cup(radius: f64, height: f64, wall: f64, base: f64, segments: usize) -> TriangleMesh {
    revolve(&cup_profile(radius, height, wall, base), segments)
}

fn cup_profile(radius: f64, height: f64, wall: f64, base: f64) -> Vec<(f64, f64)> {
    vec![
        (0.0, 0.0),
        (radius, 0.0),
        (radius, height),
        (radius - wall, height),
        (radius - wall, base),
        (0.0, base),
    ]
}

/// Thin-walled open box with square footprint `side × side`, standing on z = 0
/// with sides aligned to the x/y axes.
pub fn open_box(side: f64, height: f64, wall: f64, base: f64) -> TriangleMesh {
    // A four-segment revolution is a square rotated by 45°.
    let half_diag = side / std::f64::consts::SQRT_2;
    let inner = half_diag - wall * std::f64::consts::SQRT_2;
    let profile = vec![
        (0.0, 0.0),
        (half_diag, 0.0),
        (half_diag, height),
        (inner, height),
        (inner, base),
        (0.0, base),
    ];
    let m = revolve(&profile, 4);
    m.transformed(&RigidTransform::new(
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_4),
        Vector3::zeros(),
    ))
}

/// Hemispherical bowl: spherical shell of outer radius `radius` and thickness
/// `wall`, cut flat at the bottom by a foot of radius `foot`, opening upward.
/// The lowest point is at z = 0 and the rim at z = `rim_height()`.
pub fn bowl(radius: f64, wall: f64, foot: f64, segments: usize, rings: usize) -> TriangleMesh {
    revolve(&BowlGeometry { radius, wall, foot }.profile(rings), segments)
}

/// Analytic description of [`bowl`].
#[derive(Debug, Clone, Copy)]
pub struct BowlGeometry {
    pub radius: f64,
    pub wall: f64,
    pub foot: f64,
}

impl BowlGeometry {
    fn foot_angle(&self) -> f64 {
        (self.foot / self.radius).clamp(0.0, 0.99).asin()
    }

    /// Height of the sphere centre above z = 0.
    pub fn center_height(&self) -> f64 {
        self.radius * self.foot_angle().cos()
    }

    pub fn inner_radius(&self) -> f64 {
        self.radius - self.wall
    }

    /// Height of the lowest point of the cavity.
    pub fn floor_height(&self) -> f64 {
        (self.center_height() - self.inner_radius()).max(self.wall)
    }

    pub fn rim_height(&self) -> f64 {
        self.center_height()
    }

    fn profile(&self, rings: usize) -> Vec<(f64, f64)> {
        let rings = rings.max(2);
        let a0 = self.foot_angle();
        let c = self.center_height();
        let ri = self.inner_radius();
        let mut p = vec![(0.0, 0.0)];
        for k in 0..=rings {
            let a = a0 + (FRAC_PI_2 - a0) * k as f64 / rings as f64;
            p.push((self.radius * a.sin(), c - self.radius * a.cos()));
        }
        // the cavity gets a flat floor when the inner sphere would dip below it
        let floor = self.floor_height();
        let b0 = ((c - floor) / ri).clamp(-1.0, 1.0).acos();
        for k in (0..=rings).rev() {
            let a = b0 + (FRAC_PI_2 - b0) * k as f64 / rings as f64;
            if ri * a.sin() > 1e-9 {
                p.push((ri * a.sin(), c - ri * a.cos()));
            }
        }
        p.push((0.0, floor));
        p
    }
}

/// Ellipsoid with a localized bump; has no rotational symmetry, which makes
/// pose recovery well posed.
pub fn asymmetric_blob(radii: Vector3<f64>, segments: usize, rings: usize) -> TriangleMesh {
    let sphere = uv_sphere(1.0, segments, rings);
    let bump_dir = Vector3::new(0.6, 0.5, 0.62).normalize();
    let vertices = sphere
        .vertices()
        .iter()
        .map(|p| {
            let n = p.coords;
            let bump = 1.0 + 0.25 * (-(n - bump_dir).norm_squared() / 0.15).exp();
            Point3::new(radii.x * n.x * bump, radii.y * n.y * bump, radii.z * n.z * bump)
        })
        .collect();
    TriangleMesh::new(vertices, sphere.faces().to_vec()).expect("valid blob")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_primitives_have_positive_volume() {
        let meshes = [
            unit_cube(),
            uv_sphere(10.0, 32, 16),
            cylinder(5.0, 10.0, 32),
            cup(30.0, 60.0, 2.0, 3.0, 32),
            open_box(100.0, 50.0, 2.0, 2.0),
            bowl(50.0, 2.5, 20.0, 48, 16),
            asymmetric_blob(Vector3::new(40.0, 30.0, 20.0), 32, 16),
        ];
        for m in &meshes {
            assert!(m.signed_volume() > 0.0);
        }
    }

    #[test]
    fn open_box_dimensions() {
        let b = open_box(100.0, 50.0, 2.0, 3.0);
        let bb = b.bounding_box();
        assert!((bb.extent() - Vector3::new(100.0, 100.0, 50.0)).norm() < 1e-9);
        let expected = 100.0 * 100.0 * 50.0 - 96.0 * 96.0 * 47.0;
        assert!((b.signed_volume() - expected).abs() < 1e-6);
    }

    #[test]
    fn sphere_area_converges() {
        let s = uv_sphere(10.0, 96, 48);
        let exact = 4.0 * PI * 100.0;
        assert!((s.surface_area() - exact).abs() / exact < 2e-3);
    }

    #[test]
    fn bowl_geometry() {
        let g = BowlGeometry {
            radius: 50.0,
            wall: 3.0,
            foot: 20.0,
        };
        let m = bowl(g.radius, g.wall, g.foot, 64, 24);
        let bb = m.bounding_box();
        assert!(bb.min.z.abs() < 1e-9);
        assert!((bb.max.z - g.rim_height()).abs() < 1e-9);
        assert!(m.signed_volume() > 0.0);
        assert!((g.floor_height() - 3.0).abs() < 1e-12);
    }
}
