//! Support-drop placement: objects are lowered (or slid) along a direction
//! until a vertex ray meets another surface, then left a small margin away.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Catalog, CatalogEntry, SceneGenError, SceneRecipe};
use crate::geometry::{sample_surface, Aabb, PosedMesh};
use crate::pose::{Pose7DoF, Similarity};

/// Gap left between resting objects (mm).
pub const CONTACT_MARGIN: f64 = 0.01;
/// Distance up to which a dropped object counts as touching its support (mm).
pub const CONTACT_TOLERANCE: f64 = 0.05;
/// Placement attempts before giving up.
pub const MAX_REJECTIONS: usize = 200;
const LIFT_STEP: f64 = 0.02;
const MAX_LIFTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Role {
    Base,
    Stacked { support: usize },
    Nested { container: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Placement {
    /// Catalog index.
    pub entry: usize,
    pub pose: Pose7DoF,
    pub role: Role,
    pub upright: bool,
}

/// Scene under construction: placements and their posed meshes.
pub struct Layout<'a> {
    pub catalog: &'a Catalog,
    pub placements: Vec<Placement>,
    pub posed: Vec<PosedMesh>,
}

impl<'a> Layout<'a> {
    pub fn new(catalog: &'a Catalog) -> Self {
        Self {
            catalog,
            placements: Vec::new(),
            posed: Vec::new(),
        }
    }

    fn posed_at(&self, entry: usize, pose: &Pose7DoF) -> PosedMesh {
        PosedMesh::new(self.catalog.meshes[entry].clone(), pose)
    }

    fn push(&mut self, p: Placement) {
        self.posed.push(self.posed_at(p.entry, &p.pose));
        self.placements.push(p);
    }

    fn used(&self, entry: usize) -> bool {
        self.placements.iter().any(|p| p.entry == entry)
    }

    fn top(&self) -> f64 {
        self.posed.iter().map(|p| p.bounding_box().max.z).fold(0.0, f64::max)
    }
}

fn world_vertices(p: &PosedMesh) -> Vec<Point3<f64>> {
    p.world_mesh().vertices().to_vec()
}

fn swept(b: &Aabb, dir: &Vector3<f64>, reach: f64) -> Aabb {
    let mut s = *b;
    s.grow(&(b.min + dir * reach));
    s.grow(&(b.max + dir * reach));
    s
}

/// Distance `moving` can travel along unit `dir` before a vertex of one mesh
/// reaches a face of the other; `reach` if nothing is in the way.
pub fn travel_distance(moving: &PosedMesh, others: &[PosedMesh], dir: &Vector3<f64>, reach: f64) -> f64 {
    let path = swept(&moving.bounding_box(), dir, reach);
    let mine = world_vertices(moving);
    let mut best = reach;
    for o in others.iter().filter(|o| o.bounding_box().intersects(&path)) {
        for v in &mine {
            if let Some(h) = o.raycast_param(v, dir, best) {
                best = best.min(h.t);
            }
        }
        for u in world_vertices(o).iter().filter(|u| inside(&path, u)) {
            if let Some(h) = moving.raycast_param(u, &-dir, best) {
                best = best.min(h.t);
            }
        }
    }
    best
}

fn inside(b: &Aabb, p: &Point3<f64>) -> bool {
    (0..3).all(|k| p[k] >= b.min[k] && p[k] <= b.max[k])
}

/// Whether the two meshes share volume, probed with vertices and surface samples of each.
pub fn interpenetrates(a: &PosedMesh, b: &PosedMesh) -> bool {
    if !a.bounding_box().intersects(&b.bounding_box()) {
        return false;
    }
    let probe = |x: &PosedMesh, y: &PosedMesh| {
        let count = (x.surface_area() * 0.5).clamp(500.0, 20000.0) as usize;
        let mut pts = world_vertices(x);
        if let Ok(s) = sample_surface(x.mesh(), count, 0) {
            pts.extend(s.iter().map(|s| x.pose().apply(&s.point)));
        }
        let yb = y.bounding_box();
        pts.iter()
            .any(|p| inside(&yb, p) && (y.closest_point_within(p, 1e-6).is_some() || y.contains(p)))
    };
    probe(a, b) || probe(b, a)
}

fn any_interpenetration(p: &PosedMesh, others: &[PosedMesh]) -> bool {
    others.iter().any(|o| interpenetrates(p, o))
}

/// Whether a vertex of either mesh lies within `tol` of the other's surface.
fn touches(a: &PosedMesh, b: &PosedMesh, tol: f64) -> bool {
    world_vertices(a)
        .iter()
        .any(|v| b.closest_point_within(v, tol).is_some())
        || world_vertices(b)
            .iter()
            .any(|v| a.closest_point_within(v, tol).is_some())
}

fn uniform_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    // Shoemake's subgroup algorithm
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    ))
}

fn yaw(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..TAU))
}

/// Pose with rotation `q` whose rotated bounding box is centred on `xy` and
/// whose lowest point is at height `z`.
fn pose_at(layout: &Layout, entry: usize, q: UnitQuaternion<f64>, xy: [f64; 2], z: f64) -> Pose7DoF {
    let probe = layout.posed_at(entry, &Pose7DoF::new(q, Vector3::zeros(), 1.0).expect("unit scale"));
    let b = probe.bounding_box();
    let c = b.center();
    let t = Vector3::new(xy[0] - c.x, xy[1] - c.y, z - b.min.z);
    Pose7DoF::new(q, t, 1.0).expect("unit scale")
}

fn shifted(p: &Pose7DoF, d: Vector3<f64>) -> Pose7DoF {
    p.with_translation(p.t() + d)
}

/// Lowers the object along −z onto the plane `z = 0` or the first surface
/// below it, then lifts it in small steps while it still interpenetrates.
pub fn drop_onto(layout: &Layout, entry: usize, pose: Pose7DoF) -> Pose7DoF {
    let p = layout.posed_at(entry, &pose);
    let to_plane = p.bounding_box().min.z;
    let down = -Vector3::z();
    let hit = travel_distance(&p, &layout.posed, &down, to_plane);
    let fall = if hit < to_plane {
        (hit - CONTACT_MARGIN).max(0.0)
    } else {
        to_plane
    };
    let mut pose = shifted(&pose, down * fall);
    for _ in 0..MAX_LIFTS {
        if !any_interpenetration(&layout.posed_at(entry, &pose), &layout.posed) {
            break;
        }
        pose = shifted(&pose, Vector3::z() * LIFT_STEP);
    }
    pose
}

/// Slides the object horizontally along unit `dir` by up to `reach`, stopping
/// `gap` short of the first contact, and backs off while interpenetrating.
pub fn slide(layout: &Layout, entry: usize, pose: Pose7DoF, dir: &Vector3<f64>, reach: f64, gap: f64) -> Pose7DoF {
    let p = layout.posed_at(entry, &pose);
    let hit = travel_distance(&p, &layout.posed, dir, reach);
    let step = if hit < reach {
        (hit - gap.max(CONTACT_MARGIN)).max(0.0)
    } else {
        reach
    };
    let mut pose = shifted(&pose, dir * step);
    for _ in 0..MAX_LIFTS {
        if !any_interpenetration(&layout.posed_at(entry, &pose), &layout.posed) {
            break;
        }
        pose = shifted(&pose, -dir * LIFT_STEP);
    }
    pose
}

/// Horizontal radius of the object's rotated footprint about its box centre.
fn footprint_radius(layout: &Layout, entry: usize, q: UnitQuaternion<f64>) -> f64 {
    let p = layout.posed_at(entry, &Pose7DoF::new(q, Vector3::zeros(), 1.0).expect("unit scale"));
    let c = p.bounding_box().center();
    world_vertices(&p)
        .iter()
        .map(|v| (v.xy() - c.xy()).norm())
        .fold(0.0, f64::max)
}

/// How base objects are arranged on the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseLayout {
    /// 2×2 grid with clearance between footprints.
    Spread { clearance: f64 },
    /// Each object slid toward the scene centre until it is `gap` from the others.
    Packed { gap: (f64, f64) },
}

/// What a base slot must hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotRequirement {
    Any,
    UprightSupport,
    UprightContainer,
}

fn can_stack(top: &CatalogEntry, support: &CatalogEntry, factor: f64) -> bool {
    top.stackable && top.volume <= factor * support.top_face_area * support.height
}

fn can_nest(layout: &Layout, inner: usize, container: &CatalogEntry, factor: f64) -> bool {
    let e = &layout.catalog.entries[inner];
    match (container.nestable_open_volume, container.opening_radius) {
        (Some(open), Some(opening)) => {
            e.volume <= factor * open && footprint_radius(layout, inner, UnitQuaternion::identity()) < opening
        }
        _ => false,
    }
}

fn choose_entry(layout: &Layout, recipe: &SceneRecipe, req: SlotRequirement, rng: &mut ChaCha8Rng) -> Option<usize> {
    let entries = &layout.catalog.entries;
    let free = |i: usize| !layout.used(i);
    let ok: Vec<usize> = (0..layout.catalog.len())
        .filter(|&i| free(i))
        .filter(|&i| {
            let e = &entries[i];
            let partner = |fits: &dyn Fn(usize) -> bool| (0..entries.len()).any(|t| t != i && free(t) && fits(t));
            match req {
                SlotRequirement::Any => true,
                SlotRequirement::UprightSupport => {
                    e.flat_top && partner(&|t| can_stack(&entries[t], e, recipe.stack_factor))
                }
                SlotRequirement::UprightContainer => partner(&|t| can_nest(layout, t, e, recipe.nest_factor)),
            }
        })
        .collect();
    ok.choose(rng).copied()
}

/// Places `recipe.base_count` distinct catalog objects on the plane. Slot `k`
/// follows `slots[k]` (or `Any`); `Any` slots are upright with probability
/// `recipe.upright_fraction`, otherwise arbitrarily rotated and resting on
/// their lowest point. Placements that interpenetrate are resampled.
pub fn place_base(
    layout: &mut Layout,
    recipe: &SceneRecipe,
    arrangement: BaseLayout,
    slots: &[SlotRequirement],
    rng: &mut ChaCha8Rng,
) -> Result<(), SceneGenError> {
    if layout.catalog.len() < recipe.object_count() {
        return Err(SceneGenError::InvalidCatalog(format!(
            "catalog has {} entries, recipe needs {}",
            layout.catalog.len(),
            recipe.object_count()
        )));
    }
    let mut order: Vec<usize> = (0..recipe.base_count).collect();
    order.shuffle(rng);
    let mut rejections = 0;
    let mut k = 0;
    while k < recipe.base_count {
        let req = slots.get(k).copied().unwrap_or(SlotRequirement::Any);
        let entry = choose_entry(layout, recipe, req, rng).ok_or(SceneGenError::NoCompatiblePair("base slot"))?;
        let upright = req != SlotRequirement::Any || rng.random_bool(recipe.upright_fraction);
        let q = if upright { yaw(rng) } else { uniform_rotation(rng) };
        let r = footprint_radius(layout, entry, q);
        let pose = match arrangement {
            BaseLayout::Spread { clearance } => {
                let pitch = 2.0 * max_footprint(layout.catalog) + clearance;
                let slot = order[k];
                let cx = (slot % 2) as f64 - 0.5;
                let cy = (slot / 2) as f64 - 0.5;
                let j = recipe.jitter;
                let xy = [
                    cx * pitch + rng.random_range(-j..=j),
                    cy * pitch + rng.random_range(-j..=j),
                ];
                pose_at(layout, entry, q, xy, 0.0)
            }
            BaseLayout::Packed { gap } => {
                if layout.posed.is_empty() {
                    let j = recipe.jitter;
                    pose_at(
                        layout,
                        entry,
                        q,
                        [rng.random_range(-j..=j), rng.random_range(-j..=j)],
                        0.0,
                    )
                } else {
                    let centre = layout
                        .posed
                        .iter()
                        .map(|p| p.bounding_box().center().coords)
                        .sum::<Vector3<f64>>()
                        / layout.posed.len() as f64;
                    let angle = TAU * k as f64 / recipe.base_count as f64 + rng.random_range(-0.4..0.4);
                    let out = Vector3::new(angle.cos(), angle.sin(), 0.0);
                    let extent = layout
                        .posed
                        .iter()
                        .map(|p| {
                            let b = p.bounding_box();
                            (b.max.coords.xy() - centre.xy())
                                .norm()
                                .max((b.min.coords.xy() - centre.xy()).norm())
                        })
                        .fold(0.0, f64::max);
                    let start = extent + r + 20.0;
                    let xy = [centre.x + out.x * start, centre.y + out.y * start];
                    let g = rng.random_range(gap.0..=gap.1);
                    let pose = pose_at(layout, entry, q, xy, 0.0);
                    slide(layout, entry, pose, &-out, start, g)
                }
            }
        };
        let candidate = layout.posed_at(entry, &pose);
        if any_interpenetration(&candidate, &layout.posed) {
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(SceneGenError::PlacementExhausted(MAX_REJECTIONS));
            }
            continue;
        }
        layout.push(Placement {
            entry,
            pose,
            role: Role::Base,
            upright,
        });
        k += 1;
    }
    Ok(())
}

fn max_footprint(catalog: &Catalog) -> f64 {
    // bounding-sphere radius covers every orientation
    catalog
        .meshes
        .iter()
        .map(|m| {
            let b = m.bounding_box();
            0.5 * b.diagonal()
        })
        .fold(0.0, f64::max)
}

/// Drops `count` stackable objects onto upright flat-topped objects. A top
/// object is compatible with a support when its volume is at most
/// `recipe.stack_factor × top-face area × height` of the support.
pub fn stack_objects(
    layout: &mut Layout,
    recipe: &SceneRecipe,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), SceneGenError> {
    for _ in 0..count {
        let supports: Vec<usize> = (0..layout.placements.len())
            .filter(|&i| layout.placements[i].upright && layout.catalog.entries[layout.placements[i].entry].flat_top)
            .collect();
        let mut pairs = Vec::new();
        for (t, e) in layout.catalog.entries.iter().enumerate() {
            if layout.used(t) {
                continue;
            }
            for &s in &supports {
                if can_stack(
                    e,
                    &layout.catalog.entries[layout.placements[s].entry],
                    recipe.stack_factor,
                ) {
                    pairs.push((t, s));
                }
            }
        }
        if pairs.is_empty() {
            return Err(SceneGenError::NoCompatiblePair("stacking"));
        }
        let mut placed = false;
        for _ in 0..MAX_REJECTIONS {
            let &(t, s) = pairs.choose(rng).expect("non-empty");
            let sp = &layout.posed[s];
            let sb = sp.bounding_box();
            let half = 0.5 * (sb.max.x - sb.min.x).min(sb.max.y - sb.min.y);
            let j = 0.15 * half;
            let c = sb.center();
            let xy = [c.x + rng.random_range(-j..=j), c.y + rng.random_range(-j..=j)];
            let start = pose_at(layout, t, yaw(rng), xy, layout.top() + 5.0);
            let pose = drop_onto(layout, t, start);
            let moved = layout.posed_at(t, &pose);
            if touches(&moved, &layout.posed[s], CONTACT_TOLERANCE) && !any_interpenetration(&moved, &layout.posed) {
                layout.push(Placement {
                    entry: t,
                    pose,
                    role: Role::Stacked { support: s },
                    upright: true,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneGenError::PlacementExhausted(MAX_REJECTIONS));
        }
    }
    Ok(())
}

/// Drops `count` objects into upright containers, one per container. An inner
/// object fits when its volume is at most `recipe.nest_factor` × the open
/// volume and its upright footprint passes through the opening.
pub fn nest_objects(
    layout: &mut Layout,
    recipe: &SceneRecipe,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), SceneGenError> {
    for _ in 0..count {
        let occupied: Vec<usize> = layout
            .placements
            .iter()
            .filter_map(|p| match p.role {
                Role::Nested { container } => Some(container),
                _ => None,
            })
            .collect();
        let containers: Vec<usize> = (0..layout.placements.len())
            .filter(|&i| layout.placements[i].upright && !occupied.contains(&i))
            .filter(|&i| {
                layout.catalog.entries[layout.placements[i].entry]
                    .nestable_open_volume
                    .is_some()
            })
            .collect();
        let mut pairs = Vec::new();
        for t in (0..layout.catalog.len()).filter(|&t| !layout.used(t)) {
            for &c in &containers {
                if can_nest(
                    layout,
                    t,
                    &layout.catalog.entries[layout.placements[c].entry],
                    recipe.nest_factor,
                ) {
                    pairs.push((t, c));
                }
            }
        }
        if pairs.is_empty() {
            return Err(SceneGenError::NoCompatiblePair("nesting"));
        }
        let mut placed = false;
        for _ in 0..MAX_REJECTIONS {
            let &(t, c) = pairs.choose(rng).expect("non-empty");
            let axis = layout.placements[c].pose.t();
            let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.random_range(0.0..PI / 2.0));
            let start = pose_at(layout, t, q, [axis.x, axis.y], layout.top() + 5.0);
            let pose = drop_onto(layout, t, start);
            let moved = layout.posed_at(t, &pose);
            if touches(&moved, &layout.posed[c], CONTACT_TOLERANCE) && !any_interpenetration(&moved, &layout.posed) {
                layout.push(Placement {
                    entry: t,
                    pose,
                    role: Role::Nested { container: c },
                    upright: true,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneGenError::PlacementExhausted(MAX_REJECTIONS));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;
    use crate::scenegen::Difficulty;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn cubes() -> Catalog {
        let big = Catalog::builtin();
        let pick = |id: &str| big.index_of(id).unwrap();
        let ids = [pick("cube_large"), pick("cube_small")];
        Catalog::from_parts(
            ids.iter().map(|&i| big.entries[i].clone()).collect(),
            ids.iter().map(|&i| big.meshes[i].mesh().clone()).collect(),
        )
        .unwrap()
    }

    fn one_base(difficulty: Difficulty) -> SceneRecipe {
        SceneRecipe {
            base_count: 1,
            stacked_count: 1,
            nested_count: 0,
            ..SceneRecipe::new(difficulty, 0)
        }
    }

    #[test]
    fn small_cube_rests_on_large_cube() {
        let cat = cubes();
        let recipe = one_base(Difficulty::Medium);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layout = Layout::new(&cat);
            place_base(
                &mut layout,
                &recipe,
                BaseLayout::Spread { clearance: 0.0 },
                &[SlotRequirement::UprightSupport],
                &mut rng,
            )
            .unwrap();
            assert_eq!(layout.placements[0].entry, 0);
            stack_objects(&mut layout, &recipe, 1, &mut rng).unwrap();
            let top = layout.posed[1].bounding_box();
            assert!((top.min.z - 50.0).abs() <= CONTACT_TOLERANCE, "bottom at {}", top.min.z);
            assert_eq!(layout.placements[1].role, Role::Stacked { support: 0 });
            assert!(!interpenetrates(&layout.posed[0], &layout.posed[1]));
        }
    }

    #[test]
    fn non_stackable_toppers_have_no_pair() {
        let mut cat = cubes();
        cat.entries[1].stackable = false;
        let recipe = one_base(Difficulty::Medium);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layout = Layout::new(&cat);
        place_base(
            &mut layout,
            &recipe,
            BaseLayout::Spread { clearance: 0.0 },
            &[],
            &mut rng,
        )
        .unwrap();
        assert!(matches!(
            stack_objects(&mut layout, &recipe, 1, &mut rng),
            Err(SceneGenError::NoCompatiblePair(_))
        ));
    }

    #[test]
    fn oversized_inner_has_no_pair() {
        let big = Catalog::builtin();
        let ids = [big.index_of("mug").unwrap(), big.index_of("cube_large").unwrap()];
        let cat = Catalog::from_parts(
            ids.iter().map(|&i| big.entries[i].clone()).collect(),
            ids.iter().map(|&i| big.meshes[i].mesh().clone()).collect(),
        )
        .unwrap();
        let recipe = SceneRecipe {
            base_count: 1,
            stacked_count: 0,
            nested_count: 1,
            ..SceneRecipe::new(Difficulty::Hard, 0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layout = Layout::new(&cat);
        place_base(
            &mut layout,
            &recipe,
            BaseLayout::Spread { clearance: 0.0 },
            &[],
            &mut rng,
        )
        .unwrap();
        layout.placements[0].upright = true;
        assert!(matches!(
            nest_objects(&mut layout, &recipe, 1, &mut rng),
            Err(SceneGenError::NoCompatiblePair(_))
        ));
    }

    #[test]
    fn travel_stops_at_obstacle() {
        let a = Arc::new(crate::geometry::MeshBVH::new(primitives::cube(Point3::origin(), 10.0)));
        let at = |x: f64| {
            PosedMesh::new(
                a.clone(),
                &Pose7DoF::new(UnitQuaternion::identity(), Vector3::new(x, 0.0, 0.0), 1.0).unwrap(),
            )
        };
        let d = travel_distance(&at(0.0), &[at(30.0)], &Vector3::x(), 100.0);
        assert!((d - 20.0).abs() < 1e-9, "{d}");
        assert_eq!(travel_distance(&at(0.0), &[at(30.0)], &-Vector3::x(), 100.0), 100.0);
        assert!(interpenetrates(&at(0.0), &at(9.0)));
        assert!(!interpenetrates(&at(0.0), &at(10.5)));
    }
}
