//! Per-path gain composition, power-angular-delay grids, and large-scale
//! channel parameters.
//!
//! A traced path's gain is free-space loss plus every interaction's loss:
//! slab reflection loss per bounce, full slab penetration loss per window
//! crossing, and obstruction-scaled losses for interior walls, opaque
//! solids, and canopy runs. Gains feed a delay/azimuth power grid and the
//! usual large-scale statistics (path loss, RMS delay spread, RMS azimuth
//! spread) with a dynamic-range cut below the strongest path.

use crate::error::{Error, Result};
use crate::geom::azimuth_difference_deg;
use crate::scene::{FilmParameters, MaterialTable, StackSet};
use crate::slab::element_coefficients;
use crate::tracer::{Interaction, InteractionKind, PropagationPath};
use serde::{Deserialize, Serialize};

/// Delay grid resolution, ns.
pub const DELAY_RESOLUTION_NS: f64 = 2.0;
/// Azimuth grid resolution, degrees.
pub const AZIMUTH_RESOLUTION_DEG: f64 = 5.0;
/// Paths arriving later than this are not represented.
pub const DELAY_LIMIT_NS: f64 = 350.0;
/// Delay bins covering [0, 352) ns so a 350 ns arrival still lands in a bin.
pub const DELAY_BINS: usize = 176;
pub const AZIMUTH_BINS: usize = 72;
/// Default cut below the strongest path when computing statistics.
pub const DEFAULT_DYNAMIC_RANGE_DB: f64 = 20.0;

/// Loss parameters a path gain depends on beyond the fixed layer stacks:
/// the window film thicknesses and the per-metre canopy loss of the band
/// being evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGainModel {
    pub film: FilmParameters,
    pub canopy_loss_db_per_m: f64,
}

impl PathGainModel {
    pub fn new(film: FilmParameters, canopy_loss_db_per_m: f64) -> Result<Self> {
        if !(canopy_loss_db_per_m.is_finite() && canopy_loss_db_per_m >= 0.0) {
            return Err(Error::domain(format!(
                "canopy loss must be non-negative, got {canopy_loss_db_per_m} dB/m"
            )));
        }
        Ok(PathGainModel { film, canopy_loss_db_per_m })
    }
}

/// Free-space path loss `20 log10(4 pi d f / c)` in dB.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> Result<f64> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::domain(format!(
            "free-space loss needs a positive distance, got {distance_m} m"
        )));
    }
    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
        return Err(Error::domain(format!(
            "free-space loss needs a positive frequency, got {frequency_hz} Hz"
        )));
    }
    Ok(20.0
        * (4.0 * std::f64::consts::PI * distance_m * frequency_hz / crate::SPEED_OF_LIGHT)
            .log10())
}

/// Loss contributed by one interaction, in dB.
///
/// Window crossings apply their full slab loss however little of the first
/// zone the window blocks: a ray entering the building passes the whole pane
/// assembly either way. Wall, solid, and canopy losses scale with the
/// obstructed fraction `q`, and canopy loss additionally with the distance
/// travelled inside the canopy.
pub fn interaction_loss_db(
    interaction: &Interaction,
    stacks: &StackSet,
    materials: &MaterialTable,
    model: &PathGainModel,
    frequency_hz: f64,
) -> Result<f64> {
    let stack_loss = |penetration: bool| -> Result<f64> {
        let stack = stacks.for_class(interaction.class).ok_or_else(|| {
            Error::domain(format!(
                "object class `{}` has no layer stack",
                interaction.class.as_str()
            ))
        })?;
        let film = model.film.for_role(stack.role);
        let coefficients = element_coefficients(
            stack,
            film,
            materials,
            interaction.incidence_angle_rad,
            frequency_hz,
        )?;
        Ok(if penetration {
            coefficients.penetration_loss_db()
        } else {
            coefficients.reflection_loss_db()
        })
    };
    match interaction.kind {
        InteractionKind::Reflection => stack_loss(false),
        InteractionKind::WindowPenetration => stack_loss(true),
        InteractionKind::InteriorWallPenetration | InteractionKind::SolidPenetration => {
            Ok(interaction.fresnel_scale_q * stack_loss(true)?)
        }
        InteractionKind::CanopyPenetration => {
            let run = interaction.penetration_length_m.ok_or_else(|| {
                Error::validation("canopy crossing lacks a penetration length")
            })?;
            Ok(model.canopy_loss_db_per_m * run * interaction.fresnel_scale_q)
        }
    }
}

/// Total gain of an annotated path, in dB (always negative in practice).
pub fn path_gain(
    path: &PropagationPath,
    stacks: &StackSet,
    materials: &MaterialTable,
    model: &PathGainModel,
    frequency_hz: f64,
) -> Result<f64> {
    let mut loss = fspl_db(path.geometric_length_m, frequency_hz)?;
    for interaction in &path.interactions {
        loss += interaction_loss_db(interaction, stacks, materials, model, frequency_hz)?;
    }
    Ok(-loss)
}

/// Fill in `gain_db` on every path.
pub fn apply_gains(
    paths: &mut [PropagationPath],
    stacks: &StackSet,
    materials: &MaterialTable,
    model: &PathGainModel,
    frequency_hz: f64,
) -> Result<()> {
    for path in paths.iter_mut() {
        path.gain_db = Some(path_gain(path, stacks, materials, model, frequency_hz)?);
    }
    Ok(())
}

/// One arrival: delay, azimuth, and gain. The unit the grid and the
/// statistics are built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub delay_ns: f64,
    pub azimuth_deg: f64,
    pub gain_db: f64,
}

/// Extract samples from annotated paths; every path must carry a gain.
pub fn path_samples(paths: &[PropagationPath]) -> Result<Vec<PathSample>> {
    paths
        .iter()
        .map(|p| {
            let gain_db = p
                .gain_db
                .ok_or_else(|| Error::validation("path has no gain; annotate paths first"))?;
            Ok(PathSample {
                delay_ns: p.delay_ns(),
                azimuth_deg: p.aoa_azimuth_deg,
                gain_db,
            })
        })
        .collect()
}

/// A discrete arrival extracted from the grid: a strict local maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub delay_ns: f64,
    pub azimuth_deg: f64,
    pub gain_db: f64,
}

/// Power-angular-delay profile on a fixed 2 ns by 5 degree grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Padp {
    /// Row-major `[delay][azimuth]` power in dB; empty bins are `-inf`.
    power_db: Vec<f64>,
    discrete: Vec<DiscretePath>,
}

impl Padp {
    pub fn delay_bins() -> usize {
        DELAY_BINS
    }

    pub fn azimuth_bins() -> usize {
        AZIMUTH_BINS
    }

    pub fn delay_center_ns(bin: usize) -> f64 {
        (bin as f64 + 0.5) * DELAY_RESOLUTION_NS
    }

    pub fn azimuth_center_deg(bin: usize) -> f64 {
        (bin as f64 + 0.5) * AZIMUTH_RESOLUTION_DEG
    }

    /// Bin indices of a (delay, azimuth) coordinate, `None` past the delay
    /// horizon.
    pub fn bin_of(delay_ns: f64, azimuth_deg: f64) -> Option<(usize, usize)> {
        if !(delay_ns >= 0.0 && delay_ns <= DELAY_LIMIT_NS) {
            return None;
        }
        let d = (delay_ns / DELAY_RESOLUTION_NS) as usize;
        let az = azimuth_deg.rem_euclid(360.0);
        let a = ((az / AZIMUTH_RESOLUTION_DEG) as usize).min(AZIMUTH_BINS - 1);
        Some((d.min(DELAY_BINS - 1), a))
    }

    pub fn power_db(&self, delay_bin: usize, azimuth_bin: usize) -> f64 {
        self.power_db[delay_bin * AZIMUTH_BINS + azimuth_bin]
    }

    pub fn max_power_db(&self) -> f64 {
        self.power_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn discrete_paths(&self) -> &[DiscretePath] {
        &self.discrete
    }

    /// Occupied bins as (delay bin, azimuth bin, power dB), delay-major.
    pub fn occupied_bins(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.power_db.iter().enumerate().filter_map(|(i, &p)| {
            p.is_finite().then_some((i / AZIMUTH_BINS, i % AZIMUTH_BINS, p))
        })
    }
}

/// Deposit samples on the grid, power-summing bin collisions, then extract
/// the strict local maxima as the discrete arrival list. Samples later than
/// the delay horizon are dropped; non-finite gains are rejected.
pub fn synthesize_padp(samples: &[PathSample]) -> Result<Padp> {
    let mut linear = vec![0.0f64; DELAY_BINS * AZIMUTH_BINS];
    for s in samples {
        if !s.gain_db.is_finite() {
            return Err(Error::validation(format!(
                "sample gain must be finite, got {} dB",
                s.gain_db
            )));
        }
        if !(s.delay_ns.is_finite() && s.delay_ns >= 0.0) {
            return Err(Error::validation(format!(
                "sample delay must be non-negative, got {} ns",
                s.delay_ns
            )));
        }
        if !s.azimuth_deg.is_finite() {
            return Err(Error::validation("sample azimuth must be finite"));
        }
        let Some((d, a)) = Padp::bin_of(s.delay_ns, s.azimuth_deg) else {
            continue;
        };
        linear[d * AZIMUTH_BINS + a] += 10f64.powf(s.gain_db / 10.0);
    }
    let power_db: Vec<f64> = linear
        .iter()
        .map(|&p| if p > 0.0 { 10.0 * p.log10() } else { f64::NEG_INFINITY })
        .collect();

    let mut discrete = Vec::new();
    for d in 0..DELAY_BINS {
        for a in 0..AZIMUTH_BINS {
            let p = power_db[d * AZIMUTH_BINS + a];
            if !p.is_finite() {
                continue;
            }
            let mut is_peak = true;
            'scan: for dd in -1i64..=1 {
                for da in -1i64..=1 {
                    if dd == 0 && da == 0 {
                        continue;
                    }
                    let nd = d as i64 + dd;
                    if nd < 0 || nd >= DELAY_BINS as i64 {
                        continue;
                    }
                    // Azimuth wraps; delay does not.
                    let na = (a as i64 + da).rem_euclid(AZIMUTH_BINS as i64);
                    if power_db[nd as usize * AZIMUTH_BINS + na as usize] >= p {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
            if is_peak {
                discrete.push(DiscretePath {
                    delay_ns: Padp::delay_center_ns(d),
                    azimuth_deg: Padp::azimuth_center_deg(a),
                    gain_db: p,
                });
            }
        }
    }
    Ok(Padp { power_db, discrete })
}

/// Large-scale parameters of one link at one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lsp {
    pub path_loss_db: f64,
    pub delay_spread_ns: f64,
    pub azimuth_spread_deg: f64,
}

/// Samples that survive the dynamic-range cut below the strongest sample.
pub fn dynamic_range_filter(samples: &[PathSample], dynamic_range_db: f64) -> Vec<PathSample> {
    let best = samples
        .iter()
        .map(|s| s.gain_db)
        .fold(f64::NEG_INFINITY, f64::max);
    samples
        .iter()
        .copied()
        .filter(|s| s.gain_db >= best - dynamic_range_db)
        .collect()
}

/// Path loss, RMS delay spread, and RMS azimuth spread over the samples.
///
/// Path loss is the negated decibel power sum. Spreads are power-weighted
/// RMS deviations; azimuth deviations are measured from the power-weighted
/// circular mean and wrapped to (-180, 180], so arrivals straddling north
/// average correctly.
pub fn compute_lsps(samples: &[PathSample], dynamic_range_db: f64) -> Result<Lsp> {
    if samples.is_empty() {
        return Err(Error::domain("no paths to compute statistics over"));
    }
    if !(dynamic_range_db.is_finite() && dynamic_range_db > 0.0) {
        return Err(Error::domain(format!(
            "dynamic range must be positive, got {dynamic_range_db} dB"
        )));
    }
    let kept = dynamic_range_filter(samples, dynamic_range_db);
    let powers: Vec<f64> = kept.iter().map(|s| 10f64.powf(s.gain_db / 10.0)).collect();
    let total: f64 = powers.iter().sum();
    let path_loss_db = -10.0 * total.log10();

    let mean_delay: f64 = kept
        .iter()
        .zip(&powers)
        .map(|(s, p)| p * s.delay_ns)
        .sum::<f64>()
        / total;
    let delay_var: f64 = kept
        .iter()
        .zip(&powers)
        .map(|(s, p)| p * (s.delay_ns - mean_delay).powi(2))
        .sum::<f64>()
        / total;

    let (sin_sum, cos_sum) = kept.iter().zip(&powers).fold((0.0, 0.0), |(s, c), (x, p)| {
        let a = x.azimuth_deg.to_radians();
        (s + p * a.sin(), c + p * a.cos())
    });
    let mean_azimuth_deg = sin_sum.atan2(cos_sum).to_degrees();
    let azimuth_var: f64 = kept
        .iter()
        .zip(&powers)
        .map(|(s, p)| {
            p * azimuth_difference_deg(s.azimuth_deg, mean_azimuth_deg).powi(2)
        })
        .sum::<f64>()
        / total;

    Ok(Lsp {
        path_loss_db,
        delay_spread_ns: delay_var.max(0.0).sqrt(),
        azimuth_spread_deg: azimuth_var.max(0.0).sqrt(),
    })
}

/// Error statistics of one metric across matched links: simulated minus
/// reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_error: f64,
    pub rms_error: f64,
    /// Mean error as a percentage of the reference mean; `None` when the
    /// reference mean is zero.
    pub mean_error_pct: Option<f64>,
    /// RMS error as a percentage of the reference mean.
    pub rms_error_pct: Option<f64>,
}

fn metric_stats(pairs: &[(f64, f64)]) -> ErrorStats {
    let n = pairs.len() as f64;
    let errors: Vec<f64> = pairs.iter().map(|(sim, reference)| sim - reference).collect();
    let mean_error = errors.iter().sum::<f64>() / n;
    let rms_error = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let reference_mean = pairs.iter().map(|(_, r)| r).sum::<f64>() / n;
    let pct = |v: f64| (reference_mean != 0.0).then(|| 100.0 * v / reference_mean);
    ErrorStats {
        mean_error,
        rms_error,
        mean_error_pct: pct(mean_error),
        rms_error_pct: pct(rms_error),
    }
}

/// Comparison of simulated against reference large-scale parameters over a
/// common link set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LspComparison {
    pub link_count: usize,
    pub path_loss: ErrorStats,
    pub delay_spread: ErrorStats,
    pub azimuth_spread: ErrorStats,
}

/// Compare per-link statistics; both sides must cover exactly the same link
/// ids. Positive mean error means the simulation overshoots the reference.
pub fn compare_lsps(
    simulated: &[(String, Lsp)],
    reference: &[(String, Lsp)],
) -> Result<LspComparison> {
    use std::collections::BTreeMap;
    let sim: BTreeMap<&str, &Lsp> = simulated.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let rf: BTreeMap<&str, &Lsp> = reference.iter().map(|(k, v)| (k.as_str(), v)).collect();
    if sim.len() != simulated.len() || rf.len() != reference.len() {
        return Err(Error::validation("duplicate link id in a statistics set"));
    }
    if sim.keys().ne(rf.keys()) {
        let missing: Vec<&str> = rf.keys().filter(|k| !sim.contains_key(*k)).copied().collect();
        let extra: Vec<&str> = sim.keys().filter(|k| !rf.contains_key(*k)).copied().collect();
        return Err(Error::validation(format!(
            "link sets differ (missing: [{}], extra: [{}])",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    if sim.is_empty() {
        return Err(Error::domain("cannot compare empty statistics sets"));
    }
    let collect = |f: fn(&Lsp) -> f64| -> Vec<(f64, f64)> {
        sim.iter().map(|(k, s)| (f(s), f(rf[*k]))).collect()
    };
    Ok(LspComparison {
        link_count: sim.len(),
        path_loss: metric_stats(&collect(|l| l.path_loss_db)),
        delay_spread: metric_stats(&collect(|l| l.delay_spread_ns)),
        azimuth_spread: metric_stats(&collect(|l| l.azimuth_spread_deg)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::P3;
    use crate::scene::SceneConfig;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn sample(delay_ns: f64, azimuth_deg: f64, gain_db: f64) -> PathSample {
        PathSample { delay_ns, azimuth_deg, gain_db }
    }

    #[test]
    fn free_space_loss_at_a_hundred_nanoseconds() {
        let d = 100e-9 * crate::SPEED_OF_LIGHT;
        let loss = fspl_db(d, 4.65e9).unwrap();
        assert_abs_diff_eq!(loss, 75.33, epsilon = 0.01);
        assert!(fspl_db(0.0, 4.65e9).is_err());
        assert!(fspl_db(10.0, 0.0).is_err());
    }

    fn bare_path(length_m: f64) -> PropagationPath {
        PropagationPath {
            tx: P3::new(0.0, 0.0, 0.0),
            rx: P3::new(length_m, 0.0, 0.0),
            interactions: Vec::new(),
            geometric_length_m: length_m,
            delay_s: length_m / crate::SPEED_OF_LIGHT,
            aoa_azimuth_deg: 180.0,
            gain_db: None,
        }
    }

    fn canopy_interaction(run_m: f64, q: f64) -> Interaction {
        Interaction {
            kind: InteractionKind::CanopyPenetration,
            object_id: 9,
            class: crate::scene::ObjectClass::TreeCanopy,
            point: P3::new(5.0, 0.0, 0.0),
            incidence_angle_rad: 0.0,
            fresnel_scale_q: q,
            penetration_length_m: Some(run_m),
            segment_index: 0,
        }
    }

    #[test]
    fn canopy_run_scales_linearly_with_length_and_q() {
        let config = SceneConfig::default();
        let stacks = config.stack_set().unwrap();
        let materials = config.material_table().unwrap();
        let model = PathGainModel::new(FilmParameters::zero(), 1.1).unwrap();
        let f = 4.65e9;

        let clean = bare_path(29.98);
        let mut shaded = bare_path(29.98);
        shaded.interactions.push(canopy_interaction(2.0, 1.0));
        let g0 = path_gain(&clean, &stacks, &materials, &model, f).unwrap();
        let g1 = path_gain(&shaded, &stacks, &materials, &model, f).unwrap();
        assert_abs_diff_eq!(g0 - g1, 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(g0, -fspl_db(29.98, f).unwrap(), epsilon = 1e-12);

        let mut half = bare_path(29.98);
        half.interactions.push(canopy_interaction(3.0, 0.5));
        let g2 = path_gain(&half, &stacks, &materials, &model, f).unwrap();
        assert_abs_diff_eq!(g0 - g2, 1.1 * 3.0 * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn fully_cleared_zone_leaves_only_window_loss() {
        // q = 0 on a wall crossing removes its loss; a window keeps its full
        // slab loss because the ray still traverses the panes.
        let config = SceneConfig::default();
        let stacks = config.stack_set().unwrap();
        let materials = config.material_table().unwrap();
        let model = PathGainModel::new(FilmParameters::zero(), 1.1).unwrap();
        let f = 4.65e9;
        let theta = 0.3;

        let mut path = bare_path(30.0);
        path.interactions.push(Interaction {
            kind: InteractionKind::WindowPenetration,
            object_id: 1,
            class: crate::scene::ObjectClass::WindowTriple,
            point: P3::new(10.0, 0.0, 0.0),
            incidence_angle_rad: theta,
            fresnel_scale_q: 0.0,
            penetration_length_m: Some(0.1),
            segment_index: 0,
        });
        path.interactions.push(Interaction {
            kind: InteractionKind::InteriorWallPenetration,
            object_id: 2,
            class: crate::scene::ObjectClass::InteriorWall,
            point: P3::new(20.0, 0.0, 0.0),
            incidence_angle_rad: theta,
            fresnel_scale_q: 0.0,
            penetration_length_m: Some(0.1),
            segment_index: 0,
        });
        let gain = path_gain(&path, &stacks, &materials, &model, f).unwrap();
        let window_loss = element_coefficients(
            stacks.get(crate::scene::StackRole::WindowTriple),
            0.0,
            &materials,
            theta,
            f,
        )
        .unwrap()
        .penetration_loss_db();
        assert_abs_diff_eq!(
            gain,
            -fspl_db(30.0, f).unwrap() - window_loss,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_deposits_single_sample_in_its_bin() {
        let padp = synthesize_padp(&[sample(100.0, 90.0, -80.0)]).unwrap();
        let (d, a) = Padp::bin_of(100.0, 90.0).unwrap();
        assert_eq!((d, a), (50, 18));
        assert_abs_diff_eq!(padp.power_db(d, a), -80.0, epsilon = 1e-12);
        assert_eq!(padp.occupied_bins().count(), 1);
        assert_eq!(padp.discrete_paths().len(), 1);
    }

    #[test]
    fn colliding_samples_power_sum() {
        let padp =
            synthesize_padp(&[sample(100.0, 90.0, -83.01), sample(101.0, 91.0, -83.01)])
                .unwrap();
        let (d, a) = Padp::bin_of(100.0, 90.0).unwrap();
        assert_abs_diff_eq!(padp.power_db(d, a), -80.0, epsilon = 0.01);
    }

    #[test]
    fn late_samples_fall_off_the_grid() {
        let padp = synthesize_padp(&[sample(360.0, 10.0, -80.0)]).unwrap();
        assert_eq!(padp.occupied_bins().count(), 0);
        // The horizon itself is still on the grid.
        let padp = synthesize_padp(&[sample(350.0, 10.0, -80.0)]).unwrap();
        assert_eq!(padp.occupied_bins().count(), 1);
        assert!(synthesize_padp(&[sample(1.0, 2.0, f64::NAN)]).is_err());
    }

    #[test]
    fn discrete_paths_are_strict_local_maxima() {
        let padp = synthesize_padp(&[
            sample(100.0, 90.0, -80.0),
            sample(102.0, 90.0, -85.0),
            sample(200.0, 270.0, -82.0),
        ])
        .unwrap();
        let peaks = padp.discrete_paths();
        assert_eq!(peaks.len(), 2, "the -85 dB shoulder is not a peak");
        assert_abs_diff_eq!(peaks[0].delay_ns, 101.0, epsilon = 1e-12);
        assert_abs_diff_eq!(peaks[0].azimuth_deg, 92.5, epsilon = 1e-12);
        // Azimuth wrap: neighbours across 0/360 suppress each other.
        let padp = synthesize_padp(&[
            sample(100.0, 358.0, -80.0),
            sample(100.0, 2.0, -83.0),
        ])
        .unwrap();
        assert_eq!(padp.discrete_paths().len(), 1);
    }

    #[test]
    fn single_path_statistics_are_degenerate() {
        let lsp = compute_lsps(&[sample(50.0, 123.0, -100.0)], 20.0).unwrap();
        assert_abs_diff_eq!(lsp.path_loss_db, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lsp.delay_spread_ns, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lsp.azimuth_spread_deg, 0.0, epsilon = 1e-12);
        assert!(compute_lsps(&[], 20.0).is_err());
    }

    #[test]
    fn symmetric_pairs_give_half_separation_spreads() {
        let lsp = compute_lsps(
            &[sample(0.0, 90.0, -90.0), sample(20.0, 90.0, -90.0)],
            20.0,
        )
        .unwrap();
        assert_abs_diff_eq!(lsp.delay_spread_ns, 10.0, epsilon = 1e-12);
        // Azimuths straddling the wrap point.
        let lsp = compute_lsps(
            &[sample(10.0, 350.0, -90.0), sample(10.0, 10.0, -90.0)],
            20.0,
        )
        .unwrap();
        assert_abs_diff_eq!(lsp.azimuth_spread_deg, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn weak_paths_fall_outside_the_dynamic_range() {
        let with_runt = compute_lsps(
            &[
                sample(0.0, 90.0, -80.0),
                sample(20.0, 90.0, -80.0),
                sample(300.0, 200.0, -105.0),
            ],
            20.0,
        )
        .unwrap();
        let without = compute_lsps(
            &[sample(0.0, 90.0, -80.0), sample(20.0, 90.0, -80.0)],
            20.0,
        )
        .unwrap();
        assert_eq!(with_runt, without);
    }

    #[test]
    fn dynamic_range_filter_is_idempotent() {
        let samples = vec![
            sample(0.0, 90.0, -80.0),
            sample(10.0, 120.0, -95.0),
            sample(300.0, 200.0, -105.0),
        ];
        let once = dynamic_range_filter(&samples, 20.0);
        let twice = dynamic_range_filter(&once, 20.0);
        assert_eq!(once, twice);
        assert_eq!(once.len(), 2);
    }

    #[test]
    fn common_gain_shift_moves_path_loss_only() {
        let base = vec![
            sample(0.0, 80.0, -80.0),
            sample(30.0, 150.0, -85.0),
            sample(90.0, 300.0, -92.0),
        ];
        let shifted: Vec<PathSample> = base
            .iter()
            .map(|s| sample(s.delay_ns, s.azimuth_deg, s.gain_db + 7.0))
            .collect();
        let a = compute_lsps(&base, 20.0).unwrap();
        let b = compute_lsps(&shifted, 20.0).unwrap();
        assert_abs_diff_eq!(a.path_loss_db - b.path_loss_db, 7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.delay_spread_ns, b.delay_spread_ns, epsilon = 1e-9);
        assert_abs_diff_eq!(a.azimuth_spread_deg, b.azimuth_spread_deg, epsilon = 1e-9);
    }

    #[test]
    fn azimuth_rotation_leaves_the_spread_alone() {
        let base = vec![
            sample(0.0, 80.0, -80.0),
            sample(30.0, 150.0, -85.0),
            sample(90.0, 300.0, -92.0),
        ];
        let rotated: Vec<PathSample> = base
            .iter()
            .map(|s| sample(s.delay_ns, (s.azimuth_deg + 33.3).rem_euclid(360.0), s.gain_db))
            .collect();
        let a = compute_lsps(&base, 20.0).unwrap();
        let b = compute_lsps(&rotated, 20.0).unwrap();
        assert_abs_diff_eq!(a.azimuth_spread_deg, b.azimuth_spread_deg, epsilon = 1e-9);
    }

    #[test]
    fn comparison_reference_arithmetic() {
        let sim = vec![
            ("a".to_string(), Lsp { path_loss_db: 10.0, delay_spread_ns: 1.0, azimuth_spread_deg: 1.0 }),
            ("b".to_string(), Lsp { path_loss_db: 20.0, delay_spread_ns: 1.0, azimuth_spread_deg: 1.0 }),
        ];
        let reference = vec![
            ("a".to_string(), Lsp { path_loss_db: 12.0, delay_spread_ns: 1.0, azimuth_spread_deg: 1.0 }),
            ("b".to_string(), Lsp { path_loss_db: 16.0, delay_spread_ns: 1.0, azimuth_spread_deg: 1.0 }),
        ];
        let cmp = compare_lsps(&sim, &reference).unwrap();
        assert_abs_diff_eq!(cmp.path_loss.mean_error, 1.0, epsilon = 1e-12);
        assert_relative_eq!(cmp.path_loss.rms_error, 10f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            cmp.path_loss.mean_error_pct.unwrap(),
            100.0 / 14.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(cmp.delay_spread.mean_error, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmp.delay_spread.rms_error, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn comparison_requires_matching_links() {
        let one = vec![("a".to_string(), Lsp {
            path_loss_db: 10.0,
            delay_spread_ns: 1.0,
            azimuth_spread_deg: 1.0,
        })];
        let other = vec![("b".to_string(), Lsp {
            path_loss_db: 10.0,
            delay_spread_ns: 1.0,
            azimuth_spread_deg: 1.0,
        })];
        assert!(compare_lsps(&one, &other).is_err());
        assert!(compare_lsps(&one, &[]).is_err());
    }
}
