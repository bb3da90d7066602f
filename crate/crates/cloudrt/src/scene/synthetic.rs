//! Synthetic scene generation for tests and demos.
//!
//! Walls are sampled as rectangular grids of labeled, oriented points; tree
//! canopies as ellipsoidal blobs of volume points with radial normals. The
//! shoebox builder lays out a three-room office floor behind a window facade,
//! with a corridor, a solid back wall, an opposing wall across the street and
//! optional canopies in between.

use super::{ObjectClass, ScenePoint};
use crate::error::{Error, Result};
use crate::geom::{P3, V3};

/// A rectangular flat wall section.
#[derive(Debug, Clone)]
pub struct WallSpec {
    /// One corner of the rectangle.
    pub origin: P3,
    /// First edge, full length.
    pub edge_u: V3,
    /// Second edge, full length; must be perpendicular to `edge_u`.
    pub edge_v: V3,
    /// Outward unit normal; must be perpendicular to both edges.
    pub normal: V3,
    pub object_id: u32,
    pub class: ObjectClass,
}

impl WallSpec {
    fn validate(&self) -> Result<()> {
        let lu = self.edge_u.norm();
        let lv = self.edge_v.norm();
        if lu <= 0.0 || lv <= 0.0 {
            return Err(Error::validation(format!(
                "wall {} is degenerate: edge lengths {lu} x {lv}",
                self.object_id
            )));
        }
        let tol = 1e-9;
        if self.edge_u.dot(&self.edge_v).abs() > tol * lu * lv {
            return Err(Error::validation(format!("wall {}: edges are not perpendicular", self.object_id)));
        }
        if self.normal.dot(&self.edge_u).abs() > tol * lu
            || self.normal.dot(&self.edge_v).abs() > tol * lv
        {
            return Err(Error::validation(format!(
                "wall {}: normal is not perpendicular to the surface",
                self.object_id
            )));
        }
        Ok(())
    }
}

/// An ellipsoidal tree canopy.
#[derive(Debug, Clone)]
pub struct CanopySpec {
    pub center: P3,
    /// Semi-axes along x, y, z.
    pub radii: V3,
    pub object_id: u32,
}

/// Samples a wall on a grid with spacing as close as possible to
/// `spacing_m`, edges included. A 4 m x 3 m wall at 0.1 m yields 41 x 31
/// points.
pub fn sample_wall(spec: &WallSpec, spacing_m: f64) -> Result<Vec<ScenePoint>> {
    spec.validate()?;
    if !(spacing_m > 0.0) {
        return Err(Error::validation("spacing must be positive"));
    }
    let lu = spec.edge_u.norm();
    let lv = spec.edge_v.norm();
    let nu = (lu / spacing_m).round().max(1.0) as usize;
    let nv = (lv / spacing_m).round().max(1.0) as usize;
    let mut points = Vec::with_capacity((nu + 1) * (nv + 1));
    for i in 0..=nu {
        let fu = i as f64 / nu as f64;
        for j in 0..=nv {
            let fv = j as f64 / nv as f64;
            let position = spec.origin + spec.edge_u * fu + spec.edge_v * fv;
            points.push(ScenePoint::new(position, spec.normal, spec.object_id, spec.class)?);
        }
    }
    Ok(points)
}

/// Samples the volume of a canopy ellipsoid on a grid. Normals point
/// radially outward from the center.
pub fn sample_canopy(spec: &CanopySpec, spacing_m: f64) -> Result<Vec<ScenePoint>> {
    if !(spacing_m > 0.0) {
        return Err(Error::validation("spacing must be positive"));
    }
    if spec.radii.x <= 0.0 || spec.radii.y <= 0.0 || spec.radii.z <= 0.0 {
        return Err(Error::validation(format!("canopy {} has non-positive radii", spec.object_id)));
    }
    let steps = |r: f64| (r / spacing_m).floor() as i64;
    let (sx, sy, sz) = (steps(spec.radii.x), steps(spec.radii.y), steps(spec.radii.z));
    let mut points = Vec::new();
    for ix in -sx..=sx {
        for iy in -sy..=sy {
            for iz in -sz..=sz {
                let offset =
                    V3::new(ix as f64 * spacing_m, iy as f64 * spacing_m, iz as f64 * spacing_m);
                let e = (offset.x / spec.radii.x).powi(2)
                    + (offset.y / spec.radii.y).powi(2)
                    + (offset.z / spec.radii.z).powi(2);
                if e > 1.0 {
                    continue;
                }
                let normal = if offset.norm() > 0.0 { offset.normalize() } else { V3::z() };
                points.push(ScenePoint::new(
                    spec.center + offset,
                    normal,
                    spec.object_id,
                    ObjectClass::TreeCanopy,
                )?);
            }
        }
    }
    Ok(points)
}

/// Layout of the synthetic office scene.
///
/// The facade lies in the plane y = 0 and consists of three window sections,
/// one per room; the street is at y < 0, rooms at 0 < y < `room_depth_m`, the
/// corridor behind them, and a solid exterior wall at the back. Across the
/// street stands a parking-structure wall facing the building. Object ids are
/// assigned in a fixed order: windows 0..3, back wall 3, side walls 4 and 5,
/// room dividers 6 and 7, corridor wall 8, parking wall 9, canopies from 10.
#[derive(Debug, Clone)]
pub struct ShoeboxSpec {
    pub facade_width_m: f64,
    pub room_depth_m: f64,
    pub corridor_depth_m: f64,
    pub height_m: f64,
    /// Window class of each of the three rooms, left to right.
    pub window_classes: [ObjectClass; 3],
    pub parking_distance_m: f64,
    pub parking_width_m: f64,
    pub parking_height_m: f64,
    /// Canopy centers and semi-axes.
    pub trees: Vec<(P3, V3)>,
    pub wall_spacing_m: f64,
    pub canopy_spacing_m: f64,
}

impl Default for ShoeboxSpec {
    fn default() -> Self {
        ShoeboxSpec {
            facade_width_m: 18.0,
            room_depth_m: 4.0,
            corridor_depth_m: 2.0,
            height_m: 3.0,
            window_classes: [
                ObjectClass::WindowTriple,
                ObjectClass::WindowTriple,
                ObjectClass::WindowDouble,
            ],
            parking_distance_m: 20.0,
            parking_width_m: 24.0,
            parking_height_m: 4.0,
            trees: vec![
                (P3::new(3.0, -8.0, 2.5), V3::new(1.5, 1.5, 1.2)),
                (P3::new(9.0, -8.0, 2.5), V3::new(1.5, 1.5, 1.2)),
            ],
            wall_spacing_m: 0.1,
            canopy_spacing_m: 0.25,
        }
    }
}

impl ShoeboxSpec {
    pub fn walls(&self) -> Result<Vec<WallSpec>> {
        for class in self.window_classes {
            if !class.is_window() {
                return Err(Error::validation(format!("facade sections must be windows, got {class}")));
            }
        }
        let w = self.facade_width_m;
        let h = self.height_m;
        let depth = self.room_depth_m + self.corridor_depth_m;
        let third = w / 3.0;
        let mut walls = Vec::new();
        for (i, class) in self.window_classes.into_iter().enumerate() {
            walls.push(WallSpec {
                origin: P3::new(i as f64 * third, 0.0, 0.0),
                edge_u: V3::new(third, 0.0, 0.0),
                edge_v: V3::new(0.0, 0.0, h),
                normal: V3::new(0.0, -1.0, 0.0),
                object_id: i as u32,
                class,
            });
        }
        walls.push(WallSpec {
            origin: P3::new(0.0, depth, 0.0),
            edge_u: V3::new(w, 0.0, 0.0),
            edge_v: V3::new(0.0, 0.0, h),
            normal: V3::new(0.0, 1.0, 0.0),
            object_id: 3,
            class: ObjectClass::ExteriorWall,
        });
        walls.push(WallSpec {
            origin: P3::new(0.0, 0.0, 0.0),
            edge_u: V3::new(0.0, depth, 0.0),
            edge_v: V3::new(0.0, 0.0, h),
            normal: V3::new(-1.0, 0.0, 0.0),
            object_id: 4,
            class: ObjectClass::ExteriorWall,
        });
        walls.push(WallSpec {
            origin: P3::new(w, 0.0, 0.0),
            edge_u: V3::new(0.0, depth, 0.0),
            edge_v: V3::new(0.0, 0.0, h),
            normal: V3::new(1.0, 0.0, 0.0),
            object_id: 5,
            class: ObjectClass::ExteriorWall,
        });
        for (k, x) in [(6u32, third), (7u32, 2.0 * third)] {
            walls.push(WallSpec {
                origin: P3::new(x, 0.0, 0.0),
                edge_u: V3::new(0.0, self.room_depth_m, 0.0),
                edge_v: V3::new(0.0, 0.0, h),
                normal: V3::new(1.0, 0.0, 0.0),
                object_id: k,
                class: ObjectClass::InteriorWall,
            });
        }
        walls.push(WallSpec {
            origin: P3::new(0.0, self.room_depth_m, 0.0),
            edge_u: V3::new(w, 0.0, 0.0),
            edge_v: V3::new(0.0, 0.0, h),
            normal: V3::new(0.0, 1.0, 0.0),
            object_id: 8,
            class: ObjectClass::InteriorWall,
        });
        walls.push(WallSpec {
            origin: P3::new(
                (w - self.parking_width_m) / 2.0,
                -self.parking_distance_m,
                0.0,
            ),
            edge_u: V3::new(self.parking_width_m, 0.0, 0.0),
            edge_v: V3::new(0.0, 0.0, self.parking_height_m),
            normal: V3::new(0.0, 1.0, 0.0),
            object_id: 9,
            class: ObjectClass::ExteriorWall,
        });
        Ok(walls)
    }
}

/// Builds the point cloud of a [`ShoeboxSpec`].
pub fn make_synthetic_scene(spec: &ShoeboxSpec) -> Result<Vec<ScenePoint>> {
    let mut points = Vec::new();
    for wall in spec.walls()? {
        points.extend(sample_wall(&wall, spec.wall_spacing_m)?);
    }
    for (i, (center, radii)) in spec.trees.iter().enumerate() {
        let canopy = CanopySpec { center: *center, radii: *radii, object_id: 10 + i as u32 };
        points.extend(sample_canopy(&canopy, spec.canopy_spacing_m)?);
    }
    Ok(points)
}
