use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::bvh::crossing_count;
use super::{Aabb, GeometryError, MeshBVH, TriangleMesh};

/// Placement of a regular voxel lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    /// Smallest lattice anchored at `bbox.min` covering the box, grown by
    /// `padding` voxels on every side.
    pub fn covering(bbox: &Aabb, voxel_size: f64, padding: usize) -> Result<Self, GeometryError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(GeometryError::InvalidParameter(format!(
                "voxel size {voxel_size} must be positive"
            )));
        }
        let ext = bbox.extent();
        if bbox.is_empty() || !ext.iter().all(|e| e.is_finite()) || ext.max() <= 0.0 {
            return Err(GeometryError::DegenerateMesh("bounding box has zero extent".into()));
        }
        let pad = padding as f64 * voxel_size;
        let dims = [0, 1, 2].map(|k| ((ext[k] / voxel_size) - 1e-9).ceil().max(1.0) as usize + 2 * padding);
        Ok(Self {
            origin: bbox.min - Vector3::repeat(pad),
            voxel_size,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    /// Integer cell containing `p` (may lie outside the grid).
    pub fn cell_of(&self, p: &Point3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.voxel_size).floor() as i64)
    }

    fn checked(&self, c: [i64; 3]) -> Option<usize> {
        if (0..3).all(|k| c[k] >= 0 && (c[k] as usize) < self.dims[k]) {
            Some(self.index(c[0] as usize, c[1] as usize, c[2] as usize))
        } else {
            None
        }
    }
}

/// Solid occupancy on a regular lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    spec: GridSpec,
    bits: Vec<u64>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            bits: vec![0; spec.len().div_ceil(64)],
            spec,
        }
    }

    /// Marks every voxel whose centre lies inside the mesh. Inside means odd
    /// crossing parity along at least two of the three axis directions.
    pub fn from_bvh(bvh: &MeshBVH, spec: GridSpec) -> Self {
        let mut votes = vec![0u8; spec.len()];
        for axis in 0..3 {
            let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
            let rows: Vec<(usize, usize)> = (0..spec.dims[c])
                .flat_map(|kc| (0..spec.dims[b]).map(move |kb| (kb, kc)))
                .collect();
            let inside: Vec<Vec<usize>> = rows
                .par_iter()
                .map(|&(kb, kc)| row_inside(bvh, &spec, axis, kb, kc))
                .collect();
            for (&(kb, kc), cells) in rows.iter().zip(&inside) {
                for &ka in cells {
                    let mut ijk = [0usize; 3];
                    ijk[axis] = ka;
                    ijk[b] = kb;
                    ijk[c] = kc;
                    votes[spec.index(ijk[0], ijk[1], ijk[2])] += 1;
                }
            }
        }
        let mut grid = VoxelGrid::empty(spec);
        for (i, &v) in votes.iter().enumerate() {
            if v >= 2 {
                grid.bits[i / 64] |= 1 << (i % 64);
            }
        }
        grid
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.spec.voxel_size
    }

    pub fn origin(&self) -> Point3<f64> {
        self.spec.origin
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.bit(self.spec.index(i, j, k))
    }

    fn bit(&self, idx: usize) -> bool {
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.spec.index(i, j, k);
        if value {
            self.bits[idx / 64] |= 1 << (idx % 64);
        } else {
            self.bits[idx / 64] &= !(1 << (idx % 64));
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn occupied_volume(&self) -> f64 {
        self.occupied_count() as f64 * self.spec.voxel_size.powi(3)
    }

    /// Whether the voxel containing `p` is occupied; points outside the grid are not.
    pub fn occupied_at(&self, p: &Point3<f64>) -> bool {
        self.spec.checked(self.spec.cell_of(p)).is_some_and(|i| self.bit(i))
    }

    /// Whether the voxel containing `p` or any of its 26 neighbours is occupied.
    pub fn occupied_near(&self, p: &Point3<f64>) -> bool {
        let c = self.spec.cell_of(p);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if self
                        .spec
                        .checked([c[0] + dx, c[1] + dy, c[2] + dz])
                        .is_some_and(|i| self.bit(i))
                    {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Occupied cell indices in lattice order.
    pub fn occupied_cells(&self) -> Vec<[usize; 3]> {
        let [nx, ny, nz] = self.spec.dims;
        let mut out = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    if self.get(i, j, k) {
                        out.push([i, j, k]);
                    }
                }
            }
        }
        out
    }

    pub fn union_with(&mut self, other: &VoxelGrid) {
        assert_eq!(self.spec, other.spec, "grids must share a lattice");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    /// `(|A ∧ B|, |A ∨ B|)` for grids on the same lattice.
    pub fn overlap_counts(&self, other: &VoxelGrid) -> (usize, usize) {
        assert_eq!(self.spec, other.spec, "grids must share a lattice");
        self.bits.iter().zip(&other.bits).fold((0, 0), |(i, u), (a, b)| {
            (i + (a & b).count_ones() as usize, u + (a | b).count_ones() as usize)
        })
    }
}

/// Cells along one lattice row whose centre has odd crossing parity toward +axis.
fn row_inside(bvh: &MeshBVH, spec: &GridSpec, axis: usize, kb: usize, kc: usize) -> Vec<usize> {
    let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
    let s = spec.voxel_size;
    let mut origin = spec.origin;
    origin[b] += (kb as f64 + 0.5) * s;
    origin[c] += (kc as f64 + 0.5) * s;
    let mesh_min = bvh.bounding_box().min[axis];
    origin[axis] = spec.origin[axis].min(mesh_min) - s;
    let mut dir = Vector3::zeros();
    dir[axis] = 1.0;
    let mut hits = bvh.ray_hits_all(&origin, &dir);
    if hits.is_empty() {
        return Vec::new();
    }
    let crossings = merged_crossings(&mut hits);
    let mut out = Vec::new();
    let mut next = 0;
    for ka in 0..spec.dims[axis] {
        let t = spec.origin[axis] + (ka as f64 + 0.5) * s - origin[axis];
        while next < crossings.len() && crossings[next] <= t {
            next += 1;
        }
        if (crossings.len() - next) % 2 == 1 {
            out.push(ka);
        }
    }
    out
}

/// Crossing positions after the same merge rule as [`crossing_count`].
fn merged_crossings(hits: &mut [(f64, i8)]) -> Vec<f64> {
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = Vec::new();
    let mut i = 0;
    while i < hits.len() {
        let j0 = i;
        let t = hits[i].0;
        let tol = 1e-9 * t.abs().max(1.0);
        let mut j = i + 1;
        while j < hits.len() && hits[j].0 - t <= tol {
            j += 1;
        }
        let n = crossing_count(&mut hits[j0..j]);
        out.extend(std::iter::repeat_n(t, n));
        i = j;
    }
    out
}

/// Solid voxelization on a lattice covering the mesh bounds plus `padding` voxels.
pub fn voxelize_solid(mesh: &TriangleMesh, voxel_size: f64, padding: usize) -> Result<VoxelGrid, GeometryError> {
    let spec = GridSpec::covering(&mesh.bounding_box(), voxel_size, padding)?;
    Ok(VoxelGrid::from_bvh(&MeshBVH::new(mesh.clone()), spec))
}
