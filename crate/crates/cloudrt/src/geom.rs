//! Small geometric primitives used by the tracer.

use nalgebra::{Point3, Unit, Vector3};

pub type P3 = Point3<f64>;
pub type V3 = Vector3<f64>;
pub type UnitV3 = Unit<Vector3<f64>>;

/// An oriented plane through `origin` with unit normal `normal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub origin: P3,
    pub normal: UnitV3,
}

impl Plane {
    pub fn new(origin: P3, normal: UnitV3) -> Self {
        Plane { origin, normal }
    }

    /// Signed distance of `p` from the plane, positive on the normal side.
    pub fn signed_distance(&self, p: &P3) -> f64 {
        (p - self.origin).dot(&self.normal)
    }

    /// Mirror image of `p` across the plane.
    pub fn mirror(&self, p: &P3) -> P3 {
        p - 2.0 * self.signed_distance(p) * self.normal.into_inner()
    }

    /// Intersection of the segment `a..b` with the plane, as the segment
    /// parameter `t` and the intersection point. `None` when the segment is
    /// parallel to the plane or the crossing lies outside the open interval
    /// `(0, 1)`.
    pub fn intersect_segment(&self, a: &P3, b: &P3) -> Option<(f64, P3)> {
        let da = self.signed_distance(a);
        let db = self.signed_distance(b);
        let denom = da - db;
        if denom == 0.0 {
            return None;
        }
        let t = da / denom;
        if !(t > 0.0 && t < 1.0) {
            return None;
        }
        Some((t, a + (b - a) * t))
    }
}

/// Squared distance from `p` to the segment `a..b`.
pub fn point_segment_distance_sq(p: &P3, a: &P3, b: &P3) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq == 0.0 {
        return (p - a).norm_squared();
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_squared()
}

/// Distance from `p` to the infinite line through `origin` with unit
/// direction `dir`.
pub fn point_line_distance(p: &P3, origin: &P3, dir: &UnitV3) -> f64 {
    let w = p - origin;
    (w - dir.into_inner() * w.dot(dir)).norm()
}

/// Incidence angle in radians between a propagation direction and a surface
/// normal, folded into [0, pi/2]. The sign of the normal does not matter.
pub fn incidence_angle(dir: &UnitV3, normal: &UnitV3) -> f64 {
    dir.dot(normal).abs().clamp(0.0, 1.0).acos()
}

/// Azimuth of a direction vector in degrees within [0, 360), measured in the
/// x-y plane from the +x axis towards +y. Vertical vectors map to 0.
pub fn azimuth_deg(v: &V3) -> f64 {
    if v.x == 0.0 && v.y == 0.0 {
        return 0.0;
    }
    let mut az = v.y.atan2(v.x).to_degrees();
    if az < 0.0 {
        az += 360.0;
    }
    if az >= 360.0 {
        az -= 360.0;
    }
    az
}

/// Difference `a - b` between two azimuths in degrees, wrapped to (-180, 180].
pub fn azimuth_difference_deg(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}
