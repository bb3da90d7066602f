//! Estimation of the scene parameters the layer description leaves open:
//! the window film thicknesses (shared across bands) and the per-metre
//! canopy loss of each band. Both are fit by exhaustive grid search against
//! direct-path excess losses. The module also houses the direct-path
//! refinement step that turns a coarse delay/azimuth estimate into the
//! strongest nearby grid peak, and the endpoint-jitter sensitivity study.

use crate::channel::{
    apply_gains, compute_lsps, fspl_db, path_samples, Padp, PathGainModel,
};
use crate::error::{Error, Result};
use crate::geom::azimuth_difference_deg;
use crate::scene::{FilmParameters, LinkSet, Scene, StackRole};
use crate::slab::element_coefficients;
use crate::tracer::{trace_link, InteractionKind, PropagationPath, SearchMode, TracerOptions};
use crate::SPEED_OF_LIGHT;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Refinement search half-window in delay.
pub const REFINEMENT_DELAY_WINDOW_NS: f64 = 2.0;
/// Refinement search half-window in azimuth.
pub const REFINEMENT_AZIMUTH_WINDOW_DEG: f64 = 5.0;
/// Bins more than this far below the grid maximum count as empty.
pub const REFINEMENT_NOISE_FLOOR_DB: f64 = 40.0;

/// A refined direct-path detection on a power grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedDirectPath {
    pub delay_ns: f64,
    pub azimuth_deg: f64,
    pub gain_db: f64,
}

/// Snap a coarse direct-path estimate to the strongest grid bin whose
/// center lies within the delay/azimuth search window. Bins below the noise
/// floor (grid maximum minus [`REFINEMENT_NOISE_FLOOR_DB`]) are ignored;
/// ties resolve to the earliest delay, then the lowest azimuth.
pub fn refine_direct_path(
    padp: &Padp,
    coarse_delay_ns: f64,
    coarse_azimuth_deg: f64,
) -> Result<RefinedDirectPath> {
    if !(coarse_delay_ns.is_finite() && coarse_delay_ns >= 0.0) {
        return Err(Error::domain(format!(
            "coarse delay must be non-negative, got {coarse_delay_ns} ns"
        )));
    }
    if !coarse_azimuth_deg.is_finite() {
        return Err(Error::domain("coarse azimuth must be finite"));
    }
    let floor = padp.max_power_db() - REFINEMENT_NOISE_FLOOR_DB;
    let mut best: Option<RefinedDirectPath> = None;
    for d in 0..Padp::delay_bins() {
        let delay = Padp::delay_center_ns(d);
        if (delay - coarse_delay_ns).abs() > REFINEMENT_DELAY_WINDOW_NS {
            continue;
        }
        for a in 0..Padp::azimuth_bins() {
            let azimuth = Padp::azimuth_center_deg(a);
            if azimuth_difference_deg(azimuth, coarse_azimuth_deg).abs()
                > REFINEMENT_AZIMUTH_WINDOW_DEG
            {
                continue;
            }
            let power = padp.power_db(d, a);
            if !power.is_finite() || power < floor {
                continue;
            }
            if best.map_or(true, |b| power > b.gain_db) {
                best = Some(RefinedDirectPath { delay_ns: delay, azimuth_deg: azimuth, gain_db: power });
            }
        }
    }
    best.ok_or_else(|| {
        Error::domain(format!(
            "direct path not found near ({coarse_delay_ns} ns, {coarse_azimuth_deg} deg)"
        ))
    })
}

/// One measured (or synthesized) direct-path arrival and its excess loss
/// over free space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectPathObservation {
    pub link_id: String,
    pub frequency_hz: f64,
    pub coarse_delay_ns: f64,
    pub coarse_azimuth_deg: f64,
    pub delay_ns: f64,
    pub azimuth_deg: f64,
    pub gain_db: f64,
    pub excess_loss_db: f64,
}

impl DirectPathObservation {
    /// Build an observation from a refinement result, deriving the excess
    /// loss from the refined gain and the free-space loss at the refined
    /// delay's distance.
    pub fn from_refinement(
        link_id: impl Into<String>,
        frequency_hz: f64,
        coarse_delay_ns: f64,
        coarse_azimuth_deg: f64,
        refined: RefinedDirectPath,
    ) -> Result<Self> {
        if (refined.delay_ns - coarse_delay_ns).abs() > REFINEMENT_DELAY_WINDOW_NS + 1e-9 {
            return Err(Error::validation(format!(
                "refined delay {} ns strays beyond the window around {} ns",
                refined.delay_ns, coarse_delay_ns
            )));
        }
        if azimuth_difference_deg(refined.azimuth_deg, coarse_azimuth_deg).abs()
            > REFINEMENT_AZIMUTH_WINDOW_DEG + 1e-9
        {
            return Err(Error::validation(format!(
                "refined azimuth {} deg strays beyond the window around {} deg",
                refined.azimuth_deg, coarse_azimuth_deg
            )));
        }
        let distance_m = refined.delay_ns * 1e-9 * SPEED_OF_LIGHT;
        let excess_loss_db = -refined.gain_db - fspl_db(distance_m, frequency_hz)?;
        Ok(DirectPathObservation {
            link_id: link_id.into(),
            frequency_hz,
            coarse_delay_ns,
            coarse_azimuth_deg,
            delay_ns: refined.delay_ns,
            azimuth_deg: refined.azimuth_deg,
            gain_db: refined.gain_db,
            excess_loss_db,
        })
    }

    /// Build an observation from an already-refined measurement record.
    pub fn from_measurement(
        link_id: impl Into<String>,
        frequency_hz: f64,
        delay_ns: f64,
        azimuth_deg: f64,
        gain_db: f64,
    ) -> Result<Self> {
        let refined = RefinedDirectPath { delay_ns, azimuth_deg, gain_db };
        Self::from_refinement(link_id, frequency_hz, delay_ns, azimuth_deg, refined)
    }
}

/// Observation CSV header.
pub const OBSERVATIONS_HEADER: &str = "link_id,band_ghz,tau_ns,phi_deg,gain_db";

/// Serialize observations as CSV rows under [`OBSERVATIONS_HEADER`].
pub fn write_observations_csv(observations: &[DirectPathObservation]) -> String {
    let mut out = String::from(OBSERVATIONS_HEADER);
    out.push('\n');
    for o in observations {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.link_id,
            o.frequency_hz / 1e9,
            o.delay_ns,
            o.azimuth_deg,
            o.gain_db
        ));
    }
    out
}

/// Parse an observation CSV produced by [`write_observations_csv`] (or by
/// hand, following the same header).
pub fn parse_observations_csv(text: &str) -> Result<Vec<DirectPathObservation>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == OBSERVATIONS_HEADER => {}
        Some((_, header)) => {
            return Err(Error::parse(
                1,
                format!("expected header `{OBSERVATIONS_HEADER}`, got `{}`", header.trim()),
            ));
        }
        None => return Err(Error::parse(1, "empty observations file".to_string())),
    }
    let mut out = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                line_no,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let number = |text: &str, what: &str| -> Result<f64> {
            text.trim().parse().map_err(|_| {
                Error::parse(line_no, format!("bad {what} value `{}`", text.trim()))
            })
        };
        let observation = DirectPathObservation::from_measurement(
            fields[0].trim(),
            number(fields[1], "band_ghz")? * 1e9,
            number(fields[2], "tau_ns")?,
            number(fields[3], "phi_deg")?,
            number(fields[4], "gain_db")?,
        )
        .map_err(|e| Error::parse(line_no, e.to_string()))?;
        out.push(observation);
    }
    Ok(out)
}

/// Excess loss of an annotated direct path under the given parameters: the
/// sum of its window, wall, solid, and canopy losses, excluding free space.
pub fn simulated_excess_loss(
    direct: &PropagationPath,
    scene: &Scene,
    film: FilmParameters,
    canopy_loss_db_per_m: f64,
    frequency_hz: f64,
) -> Result<f64> {
    let model = PathGainModel::new(film, canopy_loss_db_per_m)?;
    let mut total = 0.0;
    for interaction in &direct.interactions {
        if interaction.kind == InteractionKind::Reflection {
            return Err(Error::validation(
                "excess loss is defined for direct paths; this one reflects",
            ));
        }
        total += crate::channel::interaction_loss_db(
            interaction,
            &scene.stacks,
            &scene.materials,
            &model,
            frequency_hz,
        )?;
    }
    Ok(total)
}

/// Search grids for the calibration parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrids {
    /// Candidate film thicknesses, nm, ascending.
    pub film_nm: Vec<f64>,
    /// Candidate canopy losses, dB/m, ascending.
    pub canopy_db_per_m: Vec<f64>,
}

impl Default for CalibrationGrids {
    /// Film 0 to 100 nm in 1 nm steps; canopy 0 to 5 dB/m in 0.1 dB/m steps.
    fn default() -> Self {
        CalibrationGrids {
            film_nm: (0..=100).map(f64::from).collect(),
            canopy_db_per_m: (0..=50).map(|i| f64::from(i) * 0.1).collect(),
        }
    }
}

impl CalibrationGrids {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("film_nm", &self.film_nm), ("canopy_db_per_m", &self.canopy_db_per_m)]
        {
            if grid.is_empty() {
                return Err(Error::domain(format!("calibration grid `{name}` is empty")));
            }
            if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::domain(format!(
                    "calibration grid `{name}` must be non-negative"
                )));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::domain(format!(
                    "calibration grid `{name}` must be strictly ascending"
                )));
            }
        }
        Ok(())
    }
}

/// Residual of one observation at the calibrated optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResidual {
    pub link_id: String,
    pub frequency_hz: f64,
    pub observed_db: f64,
    pub simulated_db: f64,
    pub residual_db: f64,
}

/// Calibrated parameters with their fit quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub film: FilmParameters,
    /// Canopy loss per band, (frequency Hz, dB/m), ascending in frequency.
    pub canopy_db_per_m: Vec<(f64, f64)>,
    /// Mean absolute excess-loss error per band, (frequency Hz, dB).
    pub mean_abs_error_db: Vec<(f64, f64)>,
    /// Sum of the per-band mean absolute errors at the optimum.
    pub objective_db: f64,
    pub residuals: Vec<LinkResidual>,
    pub grids: CalibrationGrids,
}

/// Excess-loss decomposition of one observation's direct path: the terms
/// the grid search recombines per candidate parameter set.
struct ObservationTerms {
    link_id: String,
    frequency_hz: f64,
    observed_db: f64,
    /// Summed triple-window loss per film grid value.
    triple_losses_db: Vec<f64>,
    /// Summed double-window loss per film grid value.
    double_losses_db: Vec<f64>,
    /// Interior-wall and opaque-solid losses; film-independent.
    fixed_loss_db: f64,
    /// Total canopy metre-run weighted by obstruction; multiplies the
    /// candidate canopy loss.
    canopy_factor_m: f64,
}

fn observation_terms(
    scene: &Scene,
    observation: &DirectPathObservation,
    grids: &CalibrationGrids,
    mode: SearchMode,
) -> Result<ObservationTerms> {
    let (tx, rx) = scene.links.link_endpoints(&observation.link_id)?;
    let f = observation.frequency_hz;
    let options = TracerOptions {
        max_bounces: 0,
        delay_limit_s: scene.model.delay_limit_ns * 1e-9,
        mode,
    };
    let direct = trace_link(&scene.cloud, &tx, &rx, f, &options)?.direct;

    let mut triple_angles = Vec::new();
    let mut double_angles = Vec::new();
    let mut fixed_loss_db = 0.0;
    let mut canopy_factor_m = 0.0;
    for interaction in &direct.interactions {
        match interaction.kind {
            InteractionKind::WindowPenetration => {
                let stack = scene.stacks.for_class(interaction.class).expect("window stack");
                match stack.role {
                    StackRole::WindowTriple => triple_angles.push(interaction.incidence_angle_rad),
                    StackRole::WindowDouble => double_angles.push(interaction.incidence_angle_rad),
                    _ => unreachable!("window crossing resolved to a wall stack"),
                }
            }
            InteractionKind::InteriorWallPenetration | InteractionKind::SolidPenetration => {
                let stack = scene.stacks.for_class(interaction.class).expect("wall stack");
                let loss = element_coefficients(
                    stack,
                    0.0,
                    &scene.materials,
                    interaction.incidence_angle_rad,
                    f,
                )?
                .penetration_loss_db();
                fixed_loss_db += interaction.fresnel_scale_q * loss;
            }
            InteractionKind::CanopyPenetration => {
                let run = interaction.penetration_length_m.ok_or_else(|| {
                    Error::validation("canopy crossing lacks a penetration length")
                })?;
                canopy_factor_m += run * interaction.fresnel_scale_q;
            }
            InteractionKind::Reflection => {
                unreachable!("direct path cannot reflect")
            }
        }
    }

    let window_losses = |angles: &[f64], role: StackRole| -> Result<Vec<f64>> {
        let stack = scene.stacks.get(role);
        grids
            .film_nm
            .iter()
            .map(|&nm| {
                let mut sum = 0.0;
                for &angle in angles {
                    sum += element_coefficients(stack, nm * 1e-9, &scene.materials, angle, f)?
                        .penetration_loss_db();
                }
                Ok(sum)
            })
            .collect()
    };
    let triple_losses_db = window_losses(&triple_angles, StackRole::WindowTriple)?;
    let double_losses_db = window_losses(&double_angles, StackRole::WindowDouble)?;

    Ok(ObservationTerms {
        link_id: observation.link_id.clone(),
        frequency_hz: f,
        observed_db: observation.excess_loss_db,
        triple_losses_db,
        double_losses_db,
        fixed_loss_db,
        canopy_factor_m,
    })
}

impl ObservationTerms {
    fn simulated_db(&self, triple_index: usize, double_index: usize, canopy_db_per_m: f64) -> f64 {
        self.triple_losses_db[triple_index]
            + self.double_losses_db[double_index]
            + self.fixed_loss_db
            + canopy_db_per_m * self.canopy_factor_m
    }
}

/// Fit film thicknesses and canopy losses to the observations.
///
/// The film pair is shared across bands; each band gets its own canopy
/// loss. The objective is the per-band mean absolute excess-loss error,
/// summed over bands, minimized exhaustively over the grids. Ties resolve
/// toward thinner films, then lighter canopy loss.
pub fn calibrate(
    scene: &Scene,
    observations: &[DirectPathObservation],
    grids: &CalibrationGrids,
    mode: SearchMode,
) -> Result<CalibrationResult> {
    grids.validate()?;
    if observations.is_empty() {
        return Err(Error::domain("calibration needs at least one observation"));
    }

    // One band per distinct frequency, ascending, order-independent of the
    // observation list.
    let mut bands: Vec<f64> = Vec::new();
    for o in observations {
        if !(o.frequency_hz.is_finite() && o.frequency_hz > 0.0) {
            return Err(Error::domain(format!(
                "observation `{}` has frequency {} Hz",
                o.link_id, o.frequency_hz
            )));
        }
        if !bands.iter().any(|b| (b - o.frequency_hz).abs() <= 1e-6 * b.abs()) {
            bands.push(o.frequency_hz);
        }
    }
    bands.sort_by(f64::total_cmp);

    let terms: Vec<ObservationTerms> = observations
        .par_iter()
        .map(|o| observation_terms(scene, o, grids, mode))
        .collect::<Result<Vec<_>>>()?;
    let band_terms: Vec<Vec<&ObservationTerms>> = bands
        .iter()
        .map(|&b| {
            let mut list: Vec<&ObservationTerms> = terms
                .iter()
                .filter(|t| (t.frequency_hz - b).abs() <= 1e-6 * b)
                .collect();
            // Deterministic residual order regardless of input order.
            list.sort_by(|x, y| x.link_id.cmp(&y.link_id));
            list
        })
        .collect();

    // For each film pair the best canopy loss decouples per band, so the
    // scan is films squared times canopy per band rather than a full
    // product.
    struct Best {
        objective: f64,
        triple_index: usize,
        double_index: usize,
        canopy_indices: Vec<usize>,
        band_errors: Vec<f64>,
    }
    let n_film = grids.film_nm.len();
    let best = (0..n_film)
        .into_par_iter()
        .map(|triple_index| {
            let mut local: Option<Best> = None;
            for double_index in 0..n_film {
                let mut objective = 0.0;
                let mut canopy_indices = Vec::with_capacity(bands.len());
                let mut band_errors = Vec::with_capacity(bands.len());
                for members in &band_terms {
                    let mut band_best = f64::INFINITY;
                    let mut band_canopy = 0;
                    for (ci, &canopy) in grids.canopy_db_per_m.iter().enumerate() {
                        let total: f64 = members
                            .iter()
                            .map(|t| {
                                (t.observed_db
                                    - t.simulated_db(triple_index, double_index, canopy))
                                .abs()
                            })
                            .sum();
                        let mae = total / members.len().max(1) as f64;
                        if mae < band_best {
                            band_best = mae;
                            band_canopy = ci;
                        }
                    }
                    objective += band_best;
                    canopy_indices.push(band_canopy);
                    band_errors.push(band_best);
                }
                if local.as_ref().map_or(true, |b| objective < b.objective) {
                    local = Some(Best {
                        objective,
                        triple_index,
                        double_index,
                        canopy_indices,
                        band_errors,
                    });
                }
            }
            local.expect("film grid is non-empty")
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .expect("film grid is non-empty");

    let film = FilmParameters::new(
        grids.film_nm[best.triple_index] * 1e-9,
        grids.film_nm[best.double_index] * 1e-9,
    )?;
    let canopy_db_per_m: Vec<(f64, f64)> = bands
        .iter()
        .zip(&best.canopy_indices)
        .map(|(&b, &ci)| (b, grids.canopy_db_per_m[ci]))
        .collect();
    let mean_abs_error_db: Vec<(f64, f64)> =
        bands.iter().zip(&best.band_errors).map(|(&b, &e)| (b, e)).collect();
    let mut residuals = Vec::new();
    for (members, &(_, canopy)) in band_terms.iter().zip(&canopy_db_per_m) {
        for t in members {
            let simulated = t.simulated_db(best.triple_index, best.double_index, canopy);
            residuals.push(LinkResidual {
                link_id: t.link_id.clone(),
                frequency_hz: t.frequency_hz,
                observed_db: t.observed_db,
                simulated_db: simulated,
                residual_db: t.observed_db - simulated,
            });
        }
    }
    Ok(CalibrationResult {
        film,
        canopy_db_per_m,
        mean_abs_error_db,
        objective_db: best.objective,
        residuals,
        grids: grids.clone(),
    })
}

/// One placement of the endpoints during a jitter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterSample {
    pub tx_offset_m: (f64, f64),
    pub rx_offset_m: (f64, f64),
    /// Incidence angle at the first window on the direct path, degrees.
    pub window_incidence_deg: Option<f64>,
    /// Slab loss of that window crossing at the configured film.
    pub window_loss_db: Option<f64>,
    pub azimuth_spread_deg: f64,
}

/// Sensitivity of a link to small horizontal endpoint displacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JitterReport {
    pub link_id: String,
    pub frequency_hz: f64,
    pub box_m: f64,
    pub samples: Vec<JitterSample>,
    /// Largest window-loss difference between any two sweep samples.
    pub max_window_loss_delta_db: f64,
    /// Largest window-loss difference between samples whose window
    /// incidence differs by at most two degrees.
    pub max_loss_delta_within_2deg_db: f64,
    pub azimuth_spread_range_deg: (f64, f64),
}

/// Sweep one endpoint at a time over a horizontal grid spanning
/// `box_m` by `box_m` centered on its nominal position, re-tracing the link
/// at each placement. The other endpoint stays nominal, so every sample
/// isolates one displacement.
pub fn jitter_sensitivity(
    scene: &Scene,
    tx_index: usize,
    rx_index: usize,
    frequency_hz: f64,
    box_m: f64,
    steps_per_axis: usize,
    mode: SearchMode,
) -> Result<JitterReport> {
    if !(box_m.is_finite() && box_m >= 0.0) {
        return Err(Error::domain(format!("jitter box must be non-negative, got {box_m} m")));
    }
    if steps_per_axis == 0 {
        return Err(Error::domain("jitter sweep needs at least one step per axis"));
    }
    let tx = *scene
        .links
        .tx_positions
        .get(tx_index)
        .ok_or_else(|| Error::domain(format!("no transmitter {tx_index}")))?;
    let rx = *scene
        .links
        .rx_positions
        .get(rx_index)
        .ok_or_else(|| Error::domain(format!("no receiver {rx_index}")))?;
    let canopy = scene.model.canopy_loss_db_per_m(frequency_hz)?;
    let gain_model = PathGainModel::new(scene.model.film, canopy)?;
    let options = TracerOptions {
        max_bounces: scene.model.max_bounces,
        delay_limit_s: scene.model.delay_limit_ns * 1e-9,
        mode,
    };

    let axis: Vec<f64> = if steps_per_axis == 1 || box_m == 0.0 {
        vec![0.0]
    } else {
        (0..steps_per_axis)
            .map(|i| -box_m / 2.0 + box_m * i as f64 / (steps_per_axis - 1) as f64)
            .collect()
    };
    let mut placements: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for &dx in &axis {
        for &dy in &axis {
            placements.push(((dx, dy), (0.0, 0.0)));
        }
    }
    for &dx in &axis {
        for &dy in &axis {
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            placements.push(((0.0, 0.0), (dx, dy)));
        }
    }

    let samples = placements
        .into_par_iter()
        .map(|(tx_off, rx_off)| {
            let tx_moved = crate::geom::P3::new(tx.x + tx_off.0, tx.y + tx_off.1, tx.z);
            let rx_moved = crate::geom::P3::new(rx.x + rx_off.0, rx.y + rx_off.1, rx.z);
            let traced = trace_link(&scene.cloud, &tx_moved, &rx_moved, frequency_hz, &options)?;
            let mut paths = traced.into_paths();
            apply_gains(&mut paths, &scene.stacks, &scene.materials, &gain_model, frequency_hz)?;
            let lsp = compute_lsps(&path_samples(&paths)?, scene.model.dynamic_range_db)?;
            let window = paths[0]
                .interactions
                .iter()
                .find(|i| i.kind == InteractionKind::WindowPenetration);
            let (window_incidence_deg, window_loss_db) = match window {
                Some(i) => {
                    let stack = scene.stacks.for_class(i.class).expect("window stack");
                    let film = scene.model.film.for_role(stack.role);
                    let loss = element_coefficients(
                        stack,
                        film,
                        &scene.materials,
                        i.incidence_angle_rad,
                        frequency_hz,
                    )?
                    .penetration_loss_db();
                    (Some(i.incidence_angle_rad.to_degrees()), Some(loss))
                }
                None => (None, None),
            };
            Ok(JitterSample {
                tx_offset_m: tx_off,
                rx_offset_m: rx_off,
                window_incidence_deg,
                window_loss_db,
                azimuth_spread_deg: lsp.azimuth_spread_deg,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut max_any = 0.0f64;
    let mut max_close = 0.0f64;
    for (i, a) in samples.iter().enumerate() {
        let (Some(ta), Some(la)) = (a.window_incidence_deg, a.window_loss_db) else {
            continue;
        };
        for b in samples.iter().skip(i + 1) {
            let (Some(tb), Some(lb)) = (b.window_incidence_deg, b.window_loss_db) else {
                continue;
            };
            let delta = (la - lb).abs();
            max_any = max_any.max(delta);
            if (ta - tb).abs() <= 2.0 {
                max_close = max_close.max(delta);
            }
        }
    }
    let spread_range = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.azimuth_spread_deg), hi.max(s.azimuth_spread_deg))
    });
    Ok(JitterReport {
        link_id: LinkSet::link_id(tx_index, rx_index),
        frequency_hz,
        box_m,
        samples,
        max_window_loss_delta_db: max_any,
        max_loss_delta_within_2deg_db: max_close,
        azimuth_spread_range_deg: spread_range,
    })
}

/// Generate synthetic observations by running the forward model with the
/// given parameters and reading the direct path back off each link's power
/// grid, exactly as a measured dataset would be processed. `gain_noise_db`
/// shifts each refined gain (deterministically seeded noise belongs to the
/// caller); pass 0.0 for noise-free references.
pub fn synthesize_observations(
    scene: &Scene,
    film: FilmParameters,
    canopy_db_per_m: &[(f64, f64)],
    gain_noise_db: &[f64],
    mode: SearchMode,
) -> Result<Vec<DirectPathObservation>> {
    let options = TracerOptions {
        max_bounces: scene.model.max_bounces,
        delay_limit_s: scene.model.delay_limit_ns * 1e-9,
        mode,
    };
    let mut jobs = Vec::new();
    for &f in &scene.links.carrier_frequencies_hz {
        for (t, r) in scene.links.pairs() {
            jobs.push((f, t, r));
        }
    }
    if !gain_noise_db.is_empty() && gain_noise_db.len() != jobs.len() {
        return Err(Error::domain(format!(
            "need {} noise values (one per link and band), got {}",
            jobs.len(),
            gain_noise_db.len()
        )));
    }
    let canopy_for = |f: f64| -> Result<f64> {
        canopy_db_per_m
            .iter()
            .find(|(b, _)| (b - f).abs() <= 1e-6 * f)
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::domain(format!("no canopy loss supplied for {f} Hz")))
    };
    jobs.into_par_iter()
        .enumerate()
        .map(|(job_index, (f, t, r))| {
            let tx = scene.links.tx_positions[t];
            let rx = scene.links.rx_positions[r];
            let gain_model = PathGainModel::new(film, canopy_for(f)?)?;
            let traced = trace_link(&scene.cloud, &tx, &rx, f, &options)?;
            let mut paths = traced.into_paths();
            apply_gains(&mut paths, &scene.stacks, &scene.materials, &gain_model, f)?;
            let direct_delay = paths[0].delay_ns();
            let direct_azimuth = paths[0].aoa_azimuth_deg;
            let padp = crate::channel::synthesize_padp(&path_samples(&paths)?)?;
            let mut refined = refine_direct_path(&padp, direct_delay, direct_azimuth)?;
            if !gain_noise_db.is_empty() {
                refined.gain_db += gain_noise_db[job_index];
            }
            DirectPathObservation::from_refinement(
                LinkSet::link_id(t, r),
                f,
                direct_delay,
                direct_azimuth,
                refined,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{synthesize_padp, PathSample};
    use approx::assert_abs_diff_eq;

    fn padp_of(samples: &[(f64, f64, f64)]) -> Padp {
        let samples: Vec<PathSample> = samples
            .iter()
            .map(|&(delay_ns, azimuth_deg, gain_db)| PathSample {
                delay_ns,
                azimuth_deg,
                gain_db,
            })
            .collect();
        synthesize_padp(&samples).unwrap()
    }

    #[test]
    fn refinement_keeps_an_exact_hit() {
        let padp = padp_of(&[(101.0, 92.5, -80.0)]);
        let refined = refine_direct_path(&padp, 101.0, 92.5).unwrap();
        assert_eq!(
            refined,
            RefinedDirectPath { delay_ns: 101.0, azimuth_deg: 92.5, gain_db: -80.0 }
        );
    }

    #[test]
    fn refinement_snaps_to_a_displaced_peak() {
        // Peak one bin away in delay and azimuth, inside the window.
        let padp = padp_of(&[(103.0, 92.5, -80.0)]);
        let refined = refine_direct_path(&padp, 101.9, 89.0).unwrap();
        assert_abs_diff_eq!(refined.delay_ns, 103.0, epsilon = 1e-12);
        assert_abs_diff_eq!(refined.azimuth_deg, 92.5, epsilon = 1e-12);
    }

    #[test]
    fn refinement_prefers_the_stronger_of_two_peaks() {
        let padp = padp_of(&[(99.0, 87.5, -80.1), (101.0, 92.5, -80.0)]);
        let refined = refine_direct_path(&padp, 100.0, 90.0).unwrap();
        assert_abs_diff_eq!(refined.gain_db, -80.0, epsilon = 1e-12);
        assert_abs_diff_eq!(refined.delay_ns, 101.0, epsilon = 1e-12);
    }

    #[test]
    fn refinement_ignores_peaks_outside_the_window() {
        let padp = padp_of(&[(99.0, 87.5, -90.0), (201.0, 180.0, -60.0)]);
        let refined = refine_direct_path(&padp, 100.0, 90.0).unwrap();
        assert_abs_diff_eq!(refined.gain_db, -90.0, epsilon = 1e-12);
    }

    #[test]
    fn refinement_errors_on_empty_or_drowned_windows() {
        let padp = padp_of(&[(201.0, 180.0, -60.0)]);
        assert!(refine_direct_path(&padp, 100.0, 90.0).is_err());
        // A bin exists in the window but sits below the noise floor.
        let padp = padp_of(&[(201.0, 180.0, -10.0), (101.0, 92.5, -60.0)]);
        assert!(refine_direct_path(&padp, 100.0, 90.0).is_err());
    }

    #[test]
    fn observation_window_invariants_are_enforced() {
        let refined = RefinedDirectPath { delay_ns: 110.0, azimuth_deg: 90.0, gain_db: -80.0 };
        assert!(DirectPathObservation::from_refinement("t0r0", 4.65e9, 100.0, 90.0, refined)
            .is_err());
        let refined = RefinedDirectPath { delay_ns: 101.0, azimuth_deg: 120.0, gain_db: -80.0 };
        assert!(DirectPathObservation::from_refinement("t0r0", 4.65e9, 100.0, 90.0, refined)
            .is_err());
    }

    #[test]
    fn observation_csv_round_trips() {
        let a = DirectPathObservation::from_measurement("t0r0", 4.65e9, 101.0, 92.5, -85.25)
            .unwrap();
        let b = DirectPathObservation::from_measurement("t1r2", 14.25e9, 67.0, 181.0, -99.5)
            .unwrap();
        let text = write_observations_csv(&[a.clone(), b.clone()]);
        let parsed = parse_observations_csv(&text).unwrap();
        assert_eq!(parsed, vec![a, b]);

        assert!(parse_observations_csv("nope\n").is_err());
        let bad = format!("{OBSERVATIONS_HEADER}\nt0r0,4.65,xx,90,-80\n");
        let err = parse_observations_csv(&bad).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn grid_validation_rejects_junk() {
        assert!(CalibrationGrids::default().validate().is_ok());
        let empty = CalibrationGrids { film_nm: vec![], canopy_db_per_m: vec![0.0] };
        assert!(empty.validate().is_err());
        let unsorted = CalibrationGrids { film_nm: vec![5.0, 1.0], canopy_db_per_m: vec![0.0] };
        assert!(unsorted.validate().is_err());
        let negative = CalibrationGrids { film_nm: vec![-1.0, 0.0], canopy_db_per_m: vec![0.0] };
        assert!(negative.validate().is_err());
    }

    use crate::scene::{
        assemble_scene, make_synthetic_scene, PointCloud, Scene, SceneConfig, ShoeboxSpec,
    };

    /// Office behind a window facade, one street transmitter, one receiver
    /// behind its own triple window (the link crosses a tree canopy) and one
    /// behind the double window at the far end. Both carrier bands.
    fn courtyard() -> Scene {
        let spec = ShoeboxSpec {
            wall_spacing_m: 0.3,
            canopy_spacing_m: 0.5,
            ..ShoeboxSpec::default()
        };
        let points = make_synthetic_scene(&spec).unwrap();
        let cloud = PointCloud::new(points, spec.wall_spacing_m).unwrap();
        let mut config = SceneConfig::default();
        config.resolution_hint_m = spec.wall_spacing_m;
        config.links.tx_positions_m = vec![[3.0, -15.0, 1.5]];
        config.links.rx_positions_m = vec![[3.0, 2.0, 1.5], [15.0, 2.0, 1.5]];
        config.model.max_bounces = 1;
        assemble_scene(cloud, &config).unwrap()
    }

    const TRUE_CANOPY: [(f64, f64); 2] = [(4.65e9, 1.1), (14.25e9, 2.1)];

    fn small_grids() -> CalibrationGrids {
        CalibrationGrids {
            film_nm: vec![0.0, 5.0, 40.0, 80.0],
            canopy_db_per_m: vec![0.0, 1.1, 2.1, 3.0],
        }
    }

    /// Observations whose excess loss comes straight from the loss model at
    /// the true parameters, with no power-grid quantization in the way.
    fn analytic_observations(scene: &Scene, film: FilmParameters) -> Vec<DirectPathObservation> {
        let options = TracerOptions {
            max_bounces: 0,
            delay_limit_s: scene.model.delay_limit_ns * 1e-9,
            mode: SearchMode::Accelerated,
        };
        let mut out = Vec::new();
        for &f in &scene.links.carrier_frequencies_hz {
            for (t, r) in scene.links.pairs() {
                let tx = scene.links.tx_positions[t];
                let rx = scene.links.rx_positions[r];
                let direct = trace_link(&scene.cloud, &tx, &rx, f, &options).unwrap().direct;
                let canopy =
                    TRUE_CANOPY.iter().find(|(b, _)| (b - f).abs() <= 1e-6 * f).unwrap().1;
                let excess = simulated_excess_loss(&direct, scene, film, canopy, f).unwrap();
                let gain_db = -(fspl_db(direct.geometric_length_m, f).unwrap() + excess);
                out.push(
                    DirectPathObservation::from_measurement(
                        LinkSet::link_id(t, r),
                        f,
                        direct.delay_ns(),
                        direct.aoa_azimuth_deg,
                        gain_db,
                    )
                    .unwrap(),
                );
            }
        }
        out
    }

    #[test]
    fn calibration_recovers_parameters_exactly_from_noise_free_losses() {
        let scene = courtyard();
        let film = FilmParameters::new(5e-9, 40e-9).unwrap();
        let observations = analytic_observations(&scene, film);
        assert_eq!(observations.len(), 4);
        // The canopy term must be identifiable: the triple-window link runs
        // through a tree in both bands.
        let result =
            calibrate(&scene, &observations, &small_grids(), SearchMode::Accelerated).unwrap();
        assert_eq!(result.film, film);
        assert_eq!(result.canopy_db_per_m, TRUE_CANOPY.to_vec());
        assert!(result.objective_db < 1e-6, "objective {}", result.objective_db);
        for r in &result.residuals {
            assert!(r.residual_db.abs() < 1e-6, "{}: {}", r.link_id, r.residual_db);
        }
    }

    #[test]
    fn calibration_is_independent_of_observation_order() {
        let scene = courtyard();
        let film = FilmParameters::new(5e-9, 40e-9).unwrap();
        let mut observations = analytic_observations(&scene, film);
        let forward =
            calibrate(&scene, &observations, &small_grids(), SearchMode::Accelerated).unwrap();
        observations.reverse();
        let reversed =
            calibrate(&scene, &observations, &small_grids(), SearchMode::Accelerated).unwrap();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn calibration_round_trips_through_synthesized_power_grids() {
        let scene = courtyard();
        let film = FilmParameters::new(5e-9, 40e-9).unwrap();
        let observations = synthesize_observations(
            &scene,
            film,
            &TRUE_CANOPY,
            &[],
            SearchMode::Accelerated,
        )
        .unwrap();
        let result =
            calibrate(&scene, &observations, &small_grids(), SearchMode::Accelerated).unwrap();
        // Reading the direct path off the power grid quantizes its delay to
        // a bin center, so the fit is close rather than exact; the recovered
        // parameters still land on the true grid points.
        assert_eq!(result.film, film);
        assert_eq!(result.canopy_db_per_m, TRUE_CANOPY.to_vec());
        assert!(result.objective_db < 0.5, "objective {}", result.objective_db);
    }

    #[test]
    fn single_point_grids_are_returned_verbatim() {
        let scene = courtyard();
        let film = FilmParameters::new(5e-9, 40e-9).unwrap();
        let observations = analytic_observations(&scene, film);
        let grids = CalibrationGrids {
            film_nm: vec![5.0],
            canopy_db_per_m: vec![1.7],
        };
        let result =
            calibrate(&scene, &observations[..1], &grids, SearchMode::Accelerated).unwrap();
        assert_eq!(result.film.window_triple_m, 5e-9);
        assert_eq!(result.film.window_double_m, 5e-9);
        assert_eq!(result.canopy_db_per_m, vec![(4.65e9, 1.7)]);

        assert!(calibrate(&scene, &[], &grids, SearchMode::Accelerated).is_err());
    }

    #[test]
    fn zero_size_jitter_box_yields_one_nominal_sample() {
        let scene = courtyard();
        let report =
            jitter_sensitivity(&scene, 0, 0, 4.65e9, 0.0, 5, SearchMode::Accelerated).unwrap();
        assert_eq!(report.samples.len(), 1);
        assert_eq!(report.samples[0].tx_offset_m, (0.0, 0.0));
        assert_eq!(report.samples[0].rx_offset_m, (0.0, 0.0));
        assert!(report.samples[0].window_incidence_deg.is_some());
        assert_eq!(report.max_window_loss_delta_db, 0.0);
        assert_eq!(report.max_loss_delta_within_2deg_db, 0.0);
        let (lo, hi) = report.azimuth_spread_range_deg;
        assert_eq!(lo, hi);
    }

    #[test]
    fn jitter_sweep_moves_one_endpoint_at_a_time() {
        let scene = courtyard();
        let report =
            jitter_sensitivity(&scene, 0, 0, 14.25e9, 0.3, 3, SearchMode::Accelerated).unwrap();
        // 3x3 transmitter grid plus 3x3 receiver grid minus the duplicated
        // nominal placement.
        assert_eq!(report.samples.len(), 17);
        for s in &report.samples {
            let tx_moved = s.tx_offset_m != (0.0, 0.0);
            let rx_moved = s.rx_offset_m != (0.0, 0.0);
            assert!(!(tx_moved && rx_moved), "both endpoints moved in one sample");
            assert!(s.window_incidence_deg.is_some(), "sweep left the window");
            assert!(s.azimuth_spread_deg.is_finite());
        }
        assert!(report.max_window_loss_delta_db >= report.max_loss_delta_within_2deg_db);
        assert!(report.max_window_loss_delta_db.is_finite());
        let (lo, hi) = report.azimuth_spread_range_deg;
        assert!(lo <= hi);
    }
}
