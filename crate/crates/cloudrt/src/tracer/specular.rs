//! Specular path search over the point cloud.
//!
//! Single bounces follow the per-point mirror-image test: every reflector
//! point images the transmitter across its own tangent plane and is accepted
//! when the detour past that point stays within half a wavelength of the
//! image-to-receiver distance. Accepted points are grouped into flat patches
//! and each patch contributes one reflected path, reconstructed from the
//! patch's best point. Higher orders enumerate object sequences over the
//! objects' fitted planes, chain mirror images forward, walk reflection
//! points back, and keep a sequence only when every bounce is supported by a
//! cloud point passing the same per-point test for its segment pair.

use crate::error::Result;
use crate::geom::{Plane, P3, UnitV3};
use crate::scene::{ObjectClass, PointCloud};
use crate::tracer::{SearchMode, TracerOptions};
use crate::SPEED_OF_LIGHT;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Accepted points further apart than this many resolution hints never join
/// the same patch.
pub(crate) const PATCH_DISTANCE_FACTOR: f64 = 3.0;
/// Accepted points whose normals deviate more than this never join the same
/// patch.
pub(crate) const PATCH_MAX_NORMAL_DEVIATION_DEG: f64 = 10.0;

/// A reflected path's geometry before annotation: the reflecting objects in
/// bounce order, the reflection points, and the plane normals they reflect
/// about.
#[derive(Debug, Clone)]
pub(crate) struct SpecularCandidate {
    pub sequence: Vec<u32>,
    pub classes: Vec<ObjectClass>,
    pub points: Vec<P3>,
    pub normals: Vec<UnitV3>,
    pub length_m: f64,
}

/// Mirror-image acceptance test for one candidate reflection point.
///
/// Returns the detour (the test's left-hand side) when `position` supports a
/// specular bounce between `source` and `target`: both endpoints on the same
/// side of the point's tangent plane and the detour within `half_lambda`.
pub(crate) fn specular_support(
    source: &P3,
    target: &P3,
    position: &P3,
    normal: &UnitV3,
    half_lambda: f64,
) -> Option<f64> {
    let side = (source - position).dot(normal) * (target - position).dot(normal);
    if side <= 0.0 {
        return None;
    }
    let image = Plane::new(*position, *normal).mirror(source);
    let lhs = (source - position).norm() + (position - target).norm() - (image - target).norm();
    (lhs <= half_lambda).then_some(lhs)
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let grand = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = grand;
            i = grand;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

pub(crate) fn find_candidates(
    cloud: &PointCloud,
    tx: &P3,
    rx: &P3,
    wavelength_m: f64,
    options: &TracerOptions,
) -> Result<Vec<SpecularCandidate>> {
    let mut candidates = Vec::new();
    if options.max_bounces >= 1 {
        candidates.extend(single_bounce(cloud, tx, rx, wavelength_m, options));
    }
    if options.max_bounces >= 2 {
        candidates.extend(multi_bounce(cloud, tx, rx, wavelength_m, options));
    }
    Ok(candidates)
}

/// Per-point image test over the whole cloud, then patch grouping.
fn single_bounce(
    cloud: &PointCloud,
    tx: &P3,
    rx: &P3,
    wavelength_m: f64,
    options: &TracerOptions,
) -> Vec<SpecularCandidate> {
    let half_lambda = wavelength_m / 2.0;
    let accepted: Vec<(u32, f64)> = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if !p.class.is_reflector() {
                return None;
            }
            specular_support(tx, rx, &p.position, &p.normal, half_lambda)
                .map(|lhs| (i as u32, lhs))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if accepted.is_empty() {
        return Vec::new();
    }

    // Connected components over the accepted points: near in space, near in
    // normal. Object labels do not split patches, so a flat surface scanned
    // as several objects still yields a single reflection.
    let mut slot_of = vec![u32::MAX; cloud.len()];
    for (slot, (idx, _)) in accepted.iter().enumerate() {
        slot_of[*idx as usize] = slot as u32;
    }
    let radius = PATCH_DISTANCE_FACTOR * cloud.resolution_hint_m();
    let cos_limit = PATCH_MAX_NORMAL_DEVIATION_DEG.to_radians().cos();
    let mut patches = UnionFind::new(accepted.len());
    for (slot, (idx, _)) in accepted.iter().enumerate() {
        let point = &cloud.points()[*idx as usize];
        match options.mode {
            SearchMode::Accelerated => {
                for other in cloud.index().within_radius(&point.position, radius) {
                    let other_slot = slot_of[other as usize];
                    if other_slot == u32::MAX || other_slot as usize == slot {
                        continue;
                    }
                    let o = &cloud.points()[other as usize];
                    if point.normal.dot(&o.normal) >= cos_limit {
                        patches.union(slot as u32, other_slot);
                    }
                }
            }
            SearchMode::LinearScan => {
                for (other_slot, (other_idx, _)) in accepted.iter().enumerate() {
                    if other_slot == slot {
                        continue;
                    }
                    let o = &cloud.points()[*other_idx as usize];
                    if (o.position - point.position).norm_squared() <= radius * radius
                        && point.normal.dot(&o.normal) >= cos_limit
                    {
                        patches.union(slot as u32, other_slot as u32);
                    }
                }
            }
        }
    }

    // Best accepted point of each patch; then best patch per object so one
    // object never contributes two single-bounce paths.
    let mut best_of_patch: BTreeMap<u32, (f64, u32)> = BTreeMap::new();
    for (slot, (idx, lhs)) in accepted.iter().enumerate() {
        let root = patches.find(slot as u32);
        let entry = best_of_patch.entry(root).or_insert((*lhs, *idx));
        if (*lhs, *idx) < *entry {
            *entry = (*lhs, *idx);
        }
    }
    let mut best_of_object: BTreeMap<u32, (f64, u32)> = BTreeMap::new();
    for (lhs, idx) in best_of_patch.values() {
        let object = cloud.points()[*idx as usize].object_id;
        let entry = best_of_object.entry(object).or_insert((*lhs, *idx));
        if (*lhs, *idx) < *entry {
            *entry = (*lhs, *idx);
        }
    }

    let limit_m = SPEED_OF_LIGHT * options.delay_limit_s;
    let mut out = Vec::new();
    for (object, (_, idx)) in best_of_object {
        let rep = &cloud.points()[idx as usize];
        let plane = Plane::new(rep.position, rep.normal);
        let image = plane.mirror(tx);
        let Some((_, point)) = plane.intersect_segment(&image, rx) else {
            continue;
        };
        let length = (tx - point).norm() + (point - rx).norm();
        if length > limit_m {
            continue;
        }
        out.push(SpecularCandidate {
            sequence: vec![object],
            classes: vec![rep.class],
            points: vec![point],
            normals: vec![rep.normal],
            length_m: length,
        });
    }
    out
}

struct Reflector<'a> {
    object_id: u32,
    class: ObjectClass,
    plane: Plane,
    point_indices: &'a [u32],
}

/// Object-sequence enumeration for bounce orders two and up.
fn multi_bounce(
    cloud: &PointCloud,
    tx: &P3,
    rx: &P3,
    wavelength_m: f64,
    options: &TracerOptions,
) -> Vec<SpecularCandidate> {
    let reflectors: Vec<Reflector> = cloud
        .objects()
        .iter()
        .filter(|o| o.class.is_reflector())
        .filter_map(|o| {
            o.mean_normal.map(|normal| Reflector {
                object_id: o.id,
                class: o.class,
                plane: Plane::new(o.centroid, normal),
                point_indices: &o.point_indices,
            })
        })
        .collect();
    if reflectors.len() < 2 {
        return Vec::new();
    }

    let limit_m = SPEED_OF_LIGHT * options.delay_limit_s;
    // The image-to-receiver distance equals the unfolded path length, so it
    // prunes sequences early; the slack keeps the later exact length filter
    // authoritative at the boundary.
    let prune_m = limit_m * (1.0 + 1e-9);
    let half_lambda = wavelength_m / 2.0;

    let mut deduped: BTreeMap<Vec<i64>, SpecularCandidate> = BTreeMap::new();
    for order in 2..=options.max_bounces as usize {
        let per_first: Vec<Vec<SpecularCandidate>> = reflectors
            .par_iter()
            .enumerate()
            .map(|(first, _)| {
                let mut found = Vec::new();
                let mut sequence = vec![first];
                let mut images = vec![reflectors[first].plane.mirror(tx)];
                extend_sequence(
                    cloud,
                    &reflectors,
                    tx,
                    rx,
                    half_lambda,
                    prune_m,
                    limit_m,
                    order,
                    &mut sequence,
                    &mut images,
                    &mut found,
                );
                found
            })
            .collect();
        for batch in per_first {
            for candidate in batch {
                let key: Vec<i64> = candidate
                    .points
                    .iter()
                    .flat_map(|p| [p.x, p.y, p.z])
                    .map(|v| (v * 1e9).round() as i64)
                    .collect();
                match deduped.get_mut(&key) {
                    Some(existing) => {
                        if candidate.sequence < existing.sequence {
                            *existing = candidate;
                        }
                    }
                    None => {
                        deduped.insert(key, candidate);
                    }
                }
            }
        }
    }
    deduped.into_values().collect()
}

#[allow(clippy::too_many_arguments)]
fn extend_sequence(
    cloud: &PointCloud,
    reflectors: &[Reflector],
    tx: &P3,
    rx: &P3,
    half_lambda: f64,
    prune_m: f64,
    limit_m: f64,
    order: usize,
    sequence: &mut Vec<usize>,
    images: &mut Vec<P3>,
    found: &mut Vec<SpecularCandidate>,
) {
    if sequence.len() == order {
        if (images[order - 1] - rx).norm() <= prune_m {
            if let Some(candidate) =
                reconstruct(cloud, reflectors, tx, rx, half_lambda, limit_m, sequence, images)
            {
                found.push(candidate);
            }
        }
        return;
    }
    let last = *sequence.last().expect("sequence starts non-empty");
    for next in 0..reflectors.len() {
        if next == last {
            continue;
        }
        sequence.push(next);
        images.push(reflectors[next].plane.mirror(&images[sequence.len() - 2]));
        extend_sequence(
            cloud, reflectors, tx, rx, half_lambda, prune_m, limit_m, order, sequence, images,
            found,
        );
        sequence.pop();
        images.pop();
    }
}

#[allow(clippy::too_many_arguments)]
fn reconstruct(
    cloud: &PointCloud,
    reflectors: &[Reflector],
    tx: &P3,
    rx: &P3,
    half_lambda: f64,
    limit_m: f64,
    sequence: &[usize],
    images: &[P3],
) -> Option<SpecularCandidate> {
    let order = sequence.len();
    // Walk back from the receiver: each reflection point is where the
    // segment from the stage image to the next waypoint crosses the plane.
    let mut points = vec![P3::origin(); order];
    let mut next_waypoint = *rx;
    for i in (0..order).rev() {
        let plane = &reflectors[sequence[i]].plane;
        let (_, point) = plane.intersect_segment(&images[i], &next_waypoint)?;
        points[i] = point;
        next_waypoint = point;
    }

    // Each bounce must see its neighbors on the reflective side of its plane.
    let mut length = 0.0;
    for i in 0..order {
        let before = if i == 0 { tx } else { &points[i - 1] };
        let after = if i + 1 == order { rx } else { &points[i + 1] };
        let plane = &reflectors[sequence[i]].plane;
        if plane.signed_distance(before) * plane.signed_distance(after) <= 0.0 {
            return None;
        }
        length += (before - points[i]).norm();
    }
    length += (points[order - 1] - rx).norm();
    if length > limit_m {
        return None;
    }

    // Every bounce needs cloud support: some point of the object must pass
    // the per-point mirror test for the segment pair meeting there.
    for i in 0..order {
        let source = if i == 0 { tx } else { &points[i - 1] };
        let target = if i + 1 == order { rx } else { &points[i + 1] };
        let supported = reflectors[sequence[i]].point_indices.iter().any(|&k| {
            let p = &cloud.points()[k as usize];
            specular_support(source, target, &p.position, &p.normal, half_lambda).is_some()
        });
        if !supported {
            return None;
        }
    }

    Some(SpecularCandidate {
        sequence: sequence.iter().map(|&s| reflectors[s].object_id).collect(),
        classes: sequence.iter().map(|&s| reflectors[s].class).collect(),
        points,
        normals: sequence.iter().map(|&s| reflectors[s].plane.normal).collect(),
        length_m: length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::V3;
    use crate::scene::ScenePoint;

    fn wall_grid(
        origin: P3,
        edge_u: V3,
        edge_v: V3,
        normal: V3,
        spacing: f64,
        object_id: u32,
        class: ObjectClass,
    ) -> Vec<ScenePoint> {
        let nu = (edge_u.norm() / spacing).round() as usize;
        let nv = (edge_v.norm() / spacing).round() as usize;
        let mut points = Vec::new();
        for i in 0..=nu {
            for j in 0..=nv {
                let p = origin
                    + edge_u * (i as f64 / nu as f64)
                    + edge_v * (j as f64 / nv as f64);
                points.push(ScenePoint::new(p, normal, object_id, class).unwrap());
            }
        }
        points
    }

    fn options() -> TracerOptions {
        TracerOptions::default()
    }

    #[test]
    fn support_test_is_zero_at_the_exact_mirror_point() {
        let lhs = specular_support(
            &P3::new(0.0, 0.0, 1.0),
            &P3::new(2.0, 0.0, 1.0),
            &P3::new(1.0, 0.0, 0.0),
            &UnitV3::new_normalize(V3::z()),
            0.03,
        )
        .unwrap();
        assert!(lhs.abs() < 1e-12);
    }

    #[test]
    fn support_test_rejects_opposite_sides() {
        assert!(specular_support(
            &P3::new(0.0, 0.0, 1.0),
            &P3::new(2.0, 0.0, -1.0),
            &P3::new(1.0, 0.0, 0.0),
            &UnitV3::new_normalize(V3::z()),
            0.03,
        )
        .is_none());
    }

    #[test]
    fn coplanar_objects_yield_one_candidate() {
        // Two wall objects sharing the z=0 plane, split at x=1 right where
        // the mirror point falls; without cross-object grouping this would
        // double-count the reflection.
        let mut points = wall_grid(
            P3::new(0.0, -1.0, 0.0),
            V3::new(1.0, 0.0, 0.0),
            V3::new(0.0, 2.0, 0.0),
            V3::z(),
            0.1,
            0,
            ObjectClass::ExteriorWall,
        );
        points.extend(wall_grid(
            P3::new(1.1, -1.0, 0.0),
            V3::new(1.0, 0.0, 0.0),
            V3::new(0.0, 2.0, 0.0),
            V3::z(),
            0.1,
            1,
            ObjectClass::ExteriorWall,
        ));
        let cloud = PointCloud::new(points, 0.1).unwrap();
        let tx = P3::new(0.0, 0.0, 1.0);
        let rx = P3::new(2.0, 0.0, 1.0);
        let candidates = find_candidates(&cloud, &tx, &rx, 0.0645, &options()).unwrap();
        let single: Vec<_> = candidates.iter().filter(|c| c.sequence.len() == 1).collect();
        assert_eq!(single.len(), 1, "coplanar split surface must reflect once");
    }

    #[test]
    fn separated_parallel_walls_reflect_separately() {
        let mut points = wall_grid(
            P3::new(0.0, -1.0, 0.0),
            V3::new(2.0, 0.0, 0.0),
            V3::new(0.0, 2.0, 0.0),
            V3::z(),
            0.1,
            0,
            ObjectClass::ExteriorWall,
        );
        points.extend(wall_grid(
            P3::new(0.0, -1.0, -2.0),
            V3::new(2.0, 0.0, 0.0),
            V3::new(0.0, 2.0, 0.0),
            V3::z(),
            0.1,
            1,
            ObjectClass::ExteriorWall,
        ));
        let cloud = PointCloud::new(points, 0.1).unwrap();
        let tx = P3::new(0.0, 0.0, 1.0);
        let rx = P3::new(2.0, 0.0, 1.0);
        let candidates = find_candidates(&cloud, &tx, &rx, 0.0645, &options()).unwrap();
        let single: Vec<_> = candidates.iter().filter(|c| c.sequence.len() == 1).collect();
        assert_eq!(single.len(), 2);
    }

    #[test]
    fn modes_find_identical_candidates() {
        let mut points = wall_grid(
            P3::new(0.0, -1.0, 0.0),
            V3::new(2.0, 0.0, 0.0),
            V3::new(0.0, 2.0, 0.0),
            V3::z(),
            0.1,
            0,
            ObjectClass::ExteriorWall,
        );
        points.extend(wall_grid(
            P3::new(0.0, -1.0, 3.0),
            V3::new(2.0, 0.0, 0.0),
            V3::new(0.0, 2.0, 0.0),
            V3::new(0.0, 0.0, -1.0),
            0.1,
            1,
            ObjectClass::InteriorWall,
        ));
        let cloud = PointCloud::new(points, 0.1).unwrap();
        let tx = P3::new(0.1, 0.2, 1.0);
        let rx = P3::new(1.9, -0.3, 1.4);
        let fast = find_candidates(&cloud, &tx, &rx, 0.0645, &options()).unwrap();
        let slow = find_candidates(
            &cloud,
            &tx,
            &rx,
            0.0645,
            &TracerOptions { mode: SearchMode::LinearScan, ..options() },
        )
        .unwrap();
        assert_eq!(fast.len(), slow.len());
        for (f, s) in fast.iter().zip(slow.iter()) {
            assert_eq!(f.sequence, s.sequence);
            assert_eq!(f.points, s.points);
            assert_eq!(f.length_m, s.length_m);
        }
    }
}
