//! Ray construction between link endpoints: the direct path plus specular
//! reflections up to four bounces, each annotated with the objects it
//! penetrates and the first-zone obstruction scale for every crossing.

pub mod shadow;
mod specular;

pub use shadow::{detect_shadowing, fresnel_radius, SearchMode, ShadowingEvent};

use crate::error::{Error, Result};
use crate::geom::{azimuth_deg, incidence_angle, P3, UnitV3};
use crate::scene::{ObjectClass, PointCloud};
use crate::{wavelength_m, SPEED_OF_LIGHT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hard cap on reflection order; sequence enumeration beyond this is not
/// supported.
pub const MAX_BOUNCES: u32 = 4;

/// Default path delay horizon in seconds.
pub const DEFAULT_DELAY_LIMIT_S: f64 = 350e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracerOptions {
    /// Highest reflection order to search, up to [`MAX_BOUNCES`].
    pub max_bounces: u32,
    /// Paths longer than this delay are dropped.
    pub delay_limit_s: f64,
    /// Candidate search strategy; results are identical either way.
    pub mode: SearchMode,
}

impl Default for TracerOptions {
    fn default() -> Self {
        TracerOptions {
            max_bounces: MAX_BOUNCES,
            delay_limit_s: DEFAULT_DELAY_LIMIT_S,
            mode: SearchMode::Accelerated,
        }
    }
}

impl TracerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_bounces > MAX_BOUNCES {
            return Err(Error::domain(format!(
                "max_bounces {} exceeds the supported limit {MAX_BOUNCES}",
                self.max_bounces
            )));
        }
        if !(self.delay_limit_s.is_finite() && self.delay_limit_s > 0.0) {
            return Err(Error::domain(format!(
                "delay limit must be positive, got {} s",
                self.delay_limit_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Reflection,
    WindowPenetration,
    InteriorWallPenetration,
    CanopyPenetration,
    /// Crossing through an opaque solid (exterior masonry or unclassified
    /// structure); heavily attenuated but kept so blocked links stay visible.
    SolidPenetration,
}

impl InteractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InteractionKind::Reflection => "reflection",
            InteractionKind::WindowPenetration => "window_penetration",
            InteractionKind::InteriorWallPenetration => "interior_wall_penetration",
            InteractionKind::CanopyPenetration => "canopy_penetration",
            InteractionKind::SolidPenetration => "solid_penetration",
        }
    }

    /// Interaction a path picks up when it crosses an object of this class.
    pub fn for_crossing(class: ObjectClass) -> InteractionKind {
        match class {
            ObjectClass::WindowTriple | ObjectClass::WindowDouble => {
                InteractionKind::WindowPenetration
            }
            ObjectClass::InteriorWall => InteractionKind::InteriorWallPenetration,
            ObjectClass::TreeCanopy => InteractionKind::CanopyPenetration,
            ObjectClass::ExteriorWall | ObjectClass::Other => InteractionKind::SolidPenetration,
        }
    }
}

impl std::fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One event along a path: a reflection at a surface or a crossing through
/// an obstructing object.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub object_id: u32,
    pub class: ObjectClass,
    /// Reflection point, or the ray point nearest the obstructing object.
    pub point: P3,
    /// Angle between the arriving ray and the surface normal, radians.
    pub incidence_angle_rad: f64,
    /// First-zone obstruction scale in [0, 1]; 1 for reflections.
    pub fresnel_scale_q: f64,
    /// Extent of the object along the ray; set for crossings, `None` for
    /// reflections.
    pub penetration_length_m: Option<f64>,
    /// Index of the path segment this interaction lies on; a reflection
    /// terminates its segment.
    pub segment_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    pub tx: P3,
    pub rx: P3,
    /// Events in travel order from transmitter to receiver.
    pub interactions: Vec<Interaction>,
    pub geometric_length_m: f64,
    pub delay_s: f64,
    /// Arrival azimuth at the receiver, degrees in [0, 360), measured from
    /// +x toward +y, looking from the receiver back along the last segment.
    pub aoa_azimuth_deg: f64,
    /// Filled in by the channel stage; geometry alone leaves it `None`.
    pub gain_db: Option<f64>,
}

impl PropagationPath {
    pub fn bounce_count(&self) -> usize {
        self.interactions
            .iter()
            .filter(|i| i.kind == InteractionKind::Reflection)
            .count()
    }

    pub fn delay_ns(&self) -> f64 {
        self.delay_s * 1e9
    }

    /// Object ids of the reflections, in bounce order.
    pub fn reflection_sequence(&self) -> Vec<u32> {
        self.interactions
            .iter()
            .filter(|i| i.kind == InteractionKind::Reflection)
            .map(|i| i.object_id)
            .collect()
    }
}

/// Direct path and its surviving reflected companions for one link.
#[derive(Debug, Clone)]
pub struct TraceResult {
    pub direct: PropagationPath,
    pub reflected: Vec<PropagationPath>,
}

impl TraceResult {
    /// All paths, direct first, reflections in (delay, azimuth) order.
    pub fn into_paths(self) -> Vec<PropagationPath> {
        let mut paths = Vec::with_capacity(1 + self.reflected.len());
        paths.push(self.direct);
        paths.extend(self.reflected);
        paths
    }
}

fn check_endpoints(tx: &P3, rx: &P3) -> Result<()> {
    for (label, p) in [("transmitter", tx), ("receiver", rx)] {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::domain(format!("{label} position must be finite")));
        }
    }
    if tx == rx {
        return Err(Error::domain(
            "transmitter and receiver positions coincide".to_string(),
        ));
    }
    Ok(())
}

/// Annotate one segment of a path with the objects obstructing it.
///
/// `exclude` lists the objects forming the segment's endpoints (the
/// reflectors), which would otherwise shadow their own reflection.
fn segment_interactions(
    cloud: &PointCloud,
    from: &P3,
    to: &P3,
    wavelength: f64,
    exclude: &[u32],
    mode: SearchMode,
    segment_index: usize,
    out: &mut Vec<Interaction>,
) -> Result<()> {
    let events = detect_shadowing(cloud, from, to, wavelength, exclude, mode)?;
    for e in events {
        out.push(Interaction {
            kind: InteractionKind::for_crossing(e.class),
            object_id: e.object_id,
            class: e.class,
            point: e.ray_point,
            incidence_angle_rad: e.incidence_angle_rad,
            fresnel_scale_q: e.fresnel_scale_q,
            penetration_length_m: Some(e.penetration_length_m),
            segment_index,
        });
    }
    Ok(())
}

/// Trace the direct (possibly obstructed) path between the endpoints.
pub fn trace_direct(
    cloud: &PointCloud,
    tx: &P3,
    rx: &P3,
    wavelength: f64,
    mode: SearchMode,
) -> Result<PropagationPath> {
    check_endpoints(tx, rx)?;
    let mut interactions = Vec::new();
    segment_interactions(cloud, tx, rx, wavelength, &[], mode, 0, &mut interactions)?;
    let length = (tx - rx).norm();
    Ok(PropagationPath {
        tx: *tx,
        rx: *rx,
        interactions,
        geometric_length_m: length,
        delay_s: length / SPEED_OF_LIGHT,
        aoa_azimuth_deg: azimuth_deg(&(tx - rx)),
        gain_db: None,
    })
}

/// Find specular reflection paths up to `options.max_bounces` bounces and
/// annotate each segment's obstructions.
pub fn find_specular_paths(
    cloud: &PointCloud,
    tx: &P3,
    rx: &P3,
    wavelength: f64,
    options: &TracerOptions,
) -> Result<Vec<PropagationPath>> {
    check_endpoints(tx, rx)?;
    options.validate()?;
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::domain(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let candidates = specular::find_candidates(cloud, tx, rx, wavelength, options)?;
    let mut paths = candidates
        .into_par_iter()
        .map(|c| {
            let order = c.points.len();
            let mut interactions = Vec::new();
            for i in 0..=order {
                let from = if i == 0 { tx } else { &c.points[i - 1] };
                let to = if i == order { rx } else { &c.points[i] };
                let mut exclude = Vec::new();
                if i > 0 {
                    exclude.push(c.sequence[i - 1]);
                }
                if i < order {
                    exclude.push(c.sequence[i]);
                }
                segment_interactions(
                    cloud,
                    from,
                    to,
                    wavelength,
                    &exclude,
                    options.mode,
                    i,
                    &mut interactions,
                )?;
                if i < order {
                    let incoming = UnitV3::new_normalize(c.points[i] - from);
                    interactions.push(Interaction {
                        kind: InteractionKind::Reflection,
                        object_id: c.sequence[i],
                        class: c.classes[i],
                        point: c.points[i],
                        incidence_angle_rad: incidence_angle(&incoming, &c.normals[i]),
                        fresnel_scale_q: 1.0,
                        penetration_length_m: None,
                        segment_index: i,
                    });
                }
            }
            let last_point = c.points[order - 1];
            Ok(PropagationPath {
                tx: *tx,
                rx: *rx,
                interactions,
                geometric_length_m: c.length_m,
                delay_s: c.length_m / SPEED_OF_LIGHT,
                aoa_azimuth_deg: azimuth_deg(&(last_point - rx)),
                gain_db: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    paths.sort_by(|a, b| {
        a.delay_s
            .total_cmp(&b.delay_s)
            .then(a.aoa_azimuth_deg.total_cmp(&b.aoa_azimuth_deg))
            .then(a.bounce_count().cmp(&b.bounce_count()))
            .then(a.reflection_sequence().cmp(&b.reflection_sequence()))
    });
    Ok(paths)
}

/// Trace the full path set for one link at the given carrier frequency.
pub fn trace_link(
    cloud: &PointCloud,
    tx: &P3,
    rx: &P3,
    frequency_hz: f64,
    options: &TracerOptions,
) -> Result<TraceResult> {
    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
        return Err(Error::domain(format!(
            "frequency must be positive, got {frequency_hz} Hz"
        )));
    }
    let wavelength = wavelength_m(frequency_hz);
    let direct = trace_direct(cloud, tx, rx, wavelength, options.mode)?;
    let reflected = find_specular_paths(cloud, tx, rx, wavelength, options)?;
    Ok(TraceResult { direct, reflected })
}
