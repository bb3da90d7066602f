//! Shadowing detection along a path segment.
//!
//! An object shadows a segment when at least one of its points lies inside
//! the first Fresnel ellipsoid spanned between the segment endpoints. For
//! each shadowing object three geometric parameters are derived: the
//! perpendicular distance from the ray to the object, the loss scaling
//! factor built from it, and the length of ray actually buried in the
//! object's points.

use crate::error::{Error, Result};
use crate::geom::{incidence_angle, point_segment_distance_sq, P3, UnitV3, V3};
use crate::scene::{ObjectClass, PointCloud};
use std::collections::BTreeMap;

/// How candidate points for geometric queries are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Prune with the spatial index.
    #[default]
    Accelerated,
    /// Scan every point; for verifying that acceleration changes nothing.
    LinearScan,
}

/// One object blocking a path segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowingEvent {
    pub object_id: u32,
    pub class: ObjectClass,
    /// Smallest perpendicular distance from the ray line to the object,
    /// taken over the points near the segment.
    pub distance_to_ray_m: f64,
    /// Loss scaling `1 - distance_to_ray / fresnel_radius`, clamped to [0, 1].
    pub fresnel_scale_q: f64,
    /// Along-ray extent of the blocking points.
    pub penetration_length_m: f64,
    /// Angle between the ray and the mean normal of the blocking points,
    /// in [0, pi/2].
    pub incidence_angle_rad: f64,
    /// Projection of the deepest blocking point onto the ray.
    pub ray_point: P3,
    /// Along-ray coordinate of `ray_point`, measured from the segment start.
    pub along_m: f64,
}

/// First-Fresnel-zone radius at a point dividing a link of length `d1 + d2`.
pub fn fresnel_radius(d1_m: f64, d2_m: f64, wavelength_m: f64) -> Result<f64> {
    for (name, v) in [("d1", d1_m), ("d2", d2_m), ("wavelength", wavelength_m)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok((wavelength_m * d1_m * d2_m / (d1_m + d2_m)).sqrt())
}

/// Candidate point indices within `radius` of the segment, by linear scan.
pub(crate) fn candidates_linear(cloud: &PointCloud, a: &P3, b: &P3, radius: f64) -> Vec<u32> {
    let r_sq = radius * radius;
    (0..cloud.len() as u32)
        .filter(|&i| {
            point_segment_distance_sq(&cloud.points()[i as usize].position, a, b) <= r_sq
        })
        .collect()
}

struct ObjectAccumulator {
    class: ObjectClass,
    /// Over all candidate points of the object.
    min_line_distance: f64,
    /// Over blocking points only.
    blocking: usize,
    representative_distance: f64,
    representative_index: u32,
    representative_along: f64,
    along_min: f64,
    along_max: f64,
    normal_sum: V3,
}

/// All objects shadowing the segment `p1..p2`, sorted by position along the
/// segment. Objects listed in `excluded_objects` are skipped entirely.
pub fn detect_shadowing(
    cloud: &PointCloud,
    p1: &P3,
    p2: &P3,
    wavelength_m: f64,
    excluded_objects: &[u32],
    mode: SearchMode,
) -> Result<Vec<ShadowingEvent>> {
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
        return Err(Error::domain(format!("wavelength must be positive, got {wavelength_m}")));
    }
    let axis = p2 - p1;
    let total = axis.norm();
    if total == 0.0 {
        return Err(Error::domain("shadowing segment endpoints coincide"));
    }
    let dir = UnitV3::new_normalize(axis);
    let half_lambda = wavelength_m / 2.0;
    // Semi-minor axis of the first Fresnel ellipsoid; the ellipsoid is
    // contained in the capsule of this radius around the segment, so the
    // candidate query misses nothing.
    let capsule = (wavelength_m * total + wavelength_m * wavelength_m / 4.0).sqrt() / 2.0;
    let candidates = match mode {
        SearchMode::Accelerated => cloud.index().near_segment(p1, p2, capsule),
        SearchMode::LinearScan => candidates_linear(cloud, p1, p2, capsule),
    };

    let mut objects: BTreeMap<u32, ObjectAccumulator> = BTreeMap::new();
    for idx in candidates {
        let point = &cloud.points()[idx as usize];
        if excluded_objects.contains(&point.object_id) {
            continue;
        }
        let w = point.position - p1;
        let along = w.dot(&dir);
        let line_distance = (w - dir.into_inner() * along).norm();
        let acc = objects.entry(point.object_id).or_insert(ObjectAccumulator {
            class: point.class,
            min_line_distance: f64::INFINITY,
            blocking: 0,
            representative_distance: f64::INFINITY,
            representative_index: u32::MAX,
            representative_along: 0.0,
            along_min: f64::INFINITY,
            along_max: f64::NEG_INFINITY,
            normal_sum: V3::zeros(),
        });
        acc.min_line_distance = acc.min_line_distance.min(line_distance);
        let detour = (point.position - p1).norm() + (point.position - p2).norm() - total;
        if detour <= half_lambda {
            acc.blocking += 1;
            acc.along_min = acc.along_min.min(along);
            acc.along_max = acc.along_max.max(along);
            acc.normal_sum += point.normal.into_inner();
            if line_distance < acc.representative_distance {
                acc.representative_distance = line_distance;
                acc.representative_index = idx;
                acc.representative_along = along;
            }
        }
    }

    let mut events: Vec<ShadowingEvent> = objects
        .into_iter()
        .filter(|(_, acc)| acc.blocking > 0)
        .map(|(object_id, acc)| {
            // Fresnel radius at the deepest blocking point, keeping the
            // evaluation point a quarter wavelength clear of the endpoints so
            // the radius never degenerates.
            let (lo, hi) = if total > half_lambda {
                (wavelength_m / 4.0, total - wavelength_m / 4.0)
            } else {
                (total / 2.0, total / 2.0)
            };
            let at = acc.representative_along.clamp(lo, hi);
            let r_f = (wavelength_m * at * (total - at) / total).sqrt();
            let q = (1.0 - acc.min_line_distance / r_f).clamp(0.0, 1.0);
            let normal = UnitV3::try_new(acc.normal_sum, 1e-9)
                .unwrap_or(cloud.points()[acc.representative_index as usize].normal);
            ShadowingEvent {
                object_id,
                class: acc.class,
                distance_to_ray_m: acc.min_line_distance,
                fresnel_scale_q: q,
                penetration_length_m: acc.along_max - acc.along_min,
                incidence_angle_rad: incidence_angle(&dir, &normal),
                ray_point: p1 + dir.into_inner() * acc.representative_along,
                along_m: acc.representative_along,
            }
        })
        .collect();
    events.sort_by(|a, b| {
        a.along_m.total_cmp(&b.along_m).then_with(|| a.object_id.cmp(&b.object_id))
    });
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use crate::scene::ScenePoint;

    fn cloud_of(points: Vec<ScenePoint>) -> PointCloud {
        PointCloud::new(points, 0.1).unwrap()
    }

    fn pt(x: f64, y: f64, z: f64, object_id: u32, class: ObjectClass) -> ScenePoint {
        ScenePoint::new(P3::new(x, y, z), V3::new(0.0, 0.0, 1.0), object_id, class).unwrap()
    }

    #[test]
    fn fresnel_radius_reference_values() {
        let r = fresnel_radius(10.0, 10.0, 0.0645).unwrap();
        assert_abs_diff_eq!(r, (0.0645_f64 * 5.0).sqrt(), epsilon = 1e-12);
        let doubled = fresnel_radius(10.0, 10.0, 0.129).unwrap();
        assert_relative_eq!(doubled / r, 2.0_f64.sqrt(), epsilon = 1e-12);
        assert!(fresnel_radius(0.0, 1.0, 0.06).is_err());
        assert!(fresnel_radius(1.0, -1.0, 0.06).is_err());
        assert!(fresnel_radius(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn point_on_segment_scales_fully() {
        let cloud = cloud_of(vec![pt(5.0, 0.0, 0.0, 3, ObjectClass::InteriorWall)]);
        let events = detect_shadowing(
            &cloud,
            &P3::new(0.0, 0.0, 0.0),
            &P3::new(10.0, 0.0, 0.0),
            0.0645,
            &[],
            SearchMode::Accelerated,
        )
        .unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].object_id, 3);
        assert_eq!(events[0].distance_to_ray_m, 0.0);
        assert_eq!(events[0].fresnel_scale_q, 1.0);
        assert_eq!(events[0].penetration_length_m, 0.0);
        assert_relative_eq!(events[0].along_m, 5.0);
    }

    #[test]
    fn along_ray_extent_is_max_minus_min() {
        let cloud = cloud_of(vec![
            pt(2.1, 0.0, 0.0, 7, ObjectClass::TreeCanopy),
            pt(2.0, 0.0, 0.0, 7, ObjectClass::TreeCanopy),
            pt(2.4, 0.0, 0.0, 7, ObjectClass::TreeCanopy),
        ]);
        let events = detect_shadowing(
            &cloud,
            &P3::new(0.0, 0.0, 0.0),
            &P3::new(10.0, 0.0, 0.0),
            0.0645,
            &[],
            SearchMode::Accelerated,
        )
        .unwrap();
        assert_eq!(events.len(), 1);
        assert_abs_diff_eq!(events[0].penetration_length_m, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn object_outside_first_fresnel_zone_is_ignored() {
        let cloud = cloud_of(vec![pt(5.0, 1.0, 0.0, 1, ObjectClass::InteriorWall)]);
        let events = detect_shadowing(
            &cloud,
            &P3::new(0.0, 0.0, 0.0),
            &P3::new(10.0, 0.0, 0.0),
            0.0645,
            &[],
            SearchMode::Accelerated,
        )
        .unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn reversal_reports_identical_objects_and_parameters() {
        let cloud = cloud_of(vec![
            pt(3.0, 0.05, 0.0, 1, ObjectClass::InteriorWall),
            pt(3.1, -0.02, 0.1, 1, ObjectClass::InteriorWall),
            pt(7.0, 0.1, 0.0, 2, ObjectClass::TreeCanopy),
        ]);
        let a = P3::new(0.0, 0.0, 0.0);
        let b = P3::new(10.0, 0.0, 0.0);
        let fwd = detect_shadowing(&cloud, &a, &b, 0.0645, &[], SearchMode::Accelerated).unwrap();
        let rev = detect_shadowing(&cloud, &b, &a, 0.0645, &[], SearchMode::Accelerated).unwrap();
        assert_eq!(fwd.len(), rev.len());
        let mut rev = rev;
        rev.reverse();
        for (f, r) in fwd.iter().zip(rev.iter()) {
            assert_eq!(f.object_id, r.object_id);
            assert_abs_diff_eq!(f.distance_to_ray_m, r.distance_to_ray_m, epsilon = 1e-12);
            assert_abs_diff_eq!(f.penetration_length_m, r.penetration_length_m, epsilon = 1e-12);
            assert_abs_diff_eq!(f.fresnel_scale_q, r.fresnel_scale_q, epsilon = 1e-12);
            assert_abs_diff_eq!(f.along_m, 10.0 - r.along_m, epsilon = 1e-12);
        }
    }

    #[test]
    fn excluded_objects_are_skipped() {
        let cloud = cloud_of(vec![
            pt(5.0, 0.0, 0.0, 1, ObjectClass::InteriorWall),
            pt(6.0, 0.0, 0.0, 2, ObjectClass::InteriorWall),
        ]);
        let events = detect_shadowing(
            &cloud,
            &P3::new(0.0, 0.0, 0.0),
            &P3::new(10.0, 0.0, 0.0),
            0.0645,
            &[1],
            SearchMode::Accelerated,
        )
        .unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].object_id, 2);
    }

    #[test]
    fn search_modes_agree_exactly() {
        let mut points = Vec::new();
        for i in 0..30 {
            let t = i as f64 / 30.0;
            points.push(pt(10.0 * t, 0.3 * (t - 0.5), 0.1 * t, i % 4, ObjectClass::TreeCanopy));
        }
        let cloud = cloud_of(points);
        let a = P3::new(0.0, 0.0, 0.0);
        let b = P3::new(10.0, 0.0, 0.0);
        let fast = detect_shadowing(&cloud, &a, &b, 0.2, &[], SearchMode::Accelerated).unwrap();
        let slow = detect_shadowing(&cloud, &a, &b, 0.2, &[], SearchMode::LinearScan).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn longer_wavelength_reports_no_fewer_objects() {
        let cloud = cloud_of(vec![
            pt(5.0, 0.3, 0.0, 1, ObjectClass::InteriorWall),
            pt(7.0, 0.5, 0.0, 2, ObjectClass::TreeCanopy),
        ]);
        let a = P3::new(0.0, 0.0, 0.0);
        let b = P3::new(10.0, 0.0, 0.0);
        let mut previous = 0;
        for wavelength in [0.02, 0.0645, 0.2, 0.5] {
            let n = detect_shadowing(&cloud, &a, &b, wavelength, &[], SearchMode::Accelerated)
                .unwrap()
                .len();
            assert!(n >= previous, "object set shrank when wavelength grew");
            previous = n;
        }
        assert_eq!(previous, 2);
    }

    #[test]
    fn degenerate_inputs_are_domain_errors() {
        let cloud = cloud_of(vec![]);
        let p = P3::new(1.0, 2.0, 3.0);
        assert!(detect_shadowing(&cloud, &p, &p, 0.06, &[], SearchMode::Accelerated).is_err());
        let q = P3::new(4.0, 5.0, 6.0);
        assert!(detect_shadowing(&cloud, &p, &q, 0.0, &[], SearchMode::Accelerated).is_err());
    }
}
