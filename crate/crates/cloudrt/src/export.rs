//! Flat-file renderings of run results: path dumps, channel-statistic
//! reports, power grids, loss-versus-angle curves, and calibration output.
//!
//! Every writer builds a string with a fixed field order and the standard
//! shortest-round-trip float formatting, so a repeated run with identical
//! inputs serializes byte for byte identically. Writing files is the
//! caller's business.

use crate::channel::{LspComparison, Padp};
use crate::error::{Error, Result};
use crate::runner::{LinkRun, RunOutput};
use crate::scene::{LayerStack, MaterialTable};
use crate::slab::element_coefficients;
use crate::tracer::{Interaction, PropagationPath};
use serde::Serialize;

/// Column header of the path dump CSV.
pub const PATHS_CSV_HEADER: &str =
    "link_id,band_ghz,n_bounces,delay_ns,aoa_deg,gain_db,interactions";

/// Column header of the channel-statistics CSV.
pub const LSP_CSV_HEADER: &str =
    "link_id,band_ghz,incidence_deg,pl_db,ds_ns,as_deg,model_variant";

/// Column header of the loss-versus-angle CSV.
pub const CURVES_CSV_HEADER: &str = "angle_deg,loss_db_4g,loss_db_14g";

fn gain_of(path: &PropagationPath) -> Result<f64> {
    path.gain_db.ok_or_else(|| {
        Error::validation("path has no gain; run the gain stage before exporting")
    })
}

/// `kind:object_id:angle_deg:q:d_m` with an empty trailing field when the
/// interaction has no penetration length.
fn pack_interaction(i: &Interaction) -> String {
    let d = i.penetration_length_m.map(|d| d.to_string()).unwrap_or_default();
    format!(
        "{}:{}:{}:{}:{}",
        i.kind.as_str(),
        i.object_id,
        i.incidence_angle_rad.to_degrees(),
        i.fresnel_scale_q,
        d
    )
}

/// One path per row; interactions packed into the final column in travel
/// order, `|`-separated.
pub fn write_paths_csv(runs: &[LinkRun]) -> Result<String> {
    let mut out = String::from(PATHS_CSV_HEADER);
    out.push('\n');
    for run in runs {
        for path in &run.paths {
            let interactions: Vec<String> =
                path.interactions.iter().map(pack_interaction).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                run.link_id,
                run.frequency_hz / 1e9,
                path.bounce_count(),
                path.delay_ns(),
                path.aoa_azimuth_deg,
                gain_of(path)?,
                interactions.join("|")
            ));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct InteractionRecord {
    kind: &'static str,
    object_id: u32,
    angle_deg: f64,
    q: f64,
    d_m: Option<f64>,
}

#[derive(Serialize)]
struct PathRecord<'a> {
    link_id: &'a str,
    band_ghz: f64,
    n_bounces: usize,
    delay_ns: f64,
    aoa_deg: f64,
    gain_db: f64,
    interactions: Vec<InteractionRecord>,
}

/// The same dump as [`write_paths_csv`], one JSON object per line.
pub fn write_paths_jsonl(runs: &[LinkRun]) -> Result<String> {
    let mut out = String::new();
    for run in runs {
        for path in &run.paths {
            let record = PathRecord {
                link_id: &run.link_id,
                band_ghz: run.frequency_hz / 1e9,
                n_bounces: path.bounce_count(),
                delay_ns: path.delay_ns(),
                aoa_deg: path.aoa_azimuth_deg,
                gain_db: gain_of(path)?,
                interactions: path
                    .interactions
                    .iter()
                    .map(|i| InteractionRecord {
                        kind: i.kind.as_str(),
                        object_id: i.object_id,
                        angle_deg: i.incidence_angle_rad.to_degrees(),
                        q: i.fresnel_scale_q,
                        d_m: i.penetration_length_m,
                    })
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Large-scale parameters per link and band; the incidence column is the
/// direct path's first window crossing and stays empty for links that never
/// pass a window.
pub fn write_lsp_csv(output: &RunOutput) -> String {
    let mut out = String::from(LSP_CSV_HEADER);
    out.push('\n');
    for run in &output.runs {
        let incidence =
            run.direct_window_incidence_deg.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            run.link_id,
            run.frequency_hz / 1e9,
            incidence,
            run.lsp.path_loss_db,
            run.lsp.delay_spread_ns,
            run.lsp.azimuth_spread_deg,
            output.variant
        ));
    }
    out
}

/// Dense power grid, one row per delay bin. The first column is the bin's
/// center delay in ns; the remaining columns are the azimuth bins in
/// ascending order, labeled by center angle. Empty bins print as `-inf`.
pub fn write_padp_grid_csv(padp: &Padp) -> String {
    let mut out = String::from("delay_ns");
    for a in 0..Padp::azimuth_bins() {
        out.push_str(&format!(",az_{}", Padp::azimuth_center_deg(a)));
    }
    out.push('\n');
    for d in 0..Padp::delay_bins() {
        out.push_str(&Padp::delay_center_ns(d).to_string());
        for a in 0..Padp::azimuth_bins() {
            out.push(',');
            out.push_str(&padp.power_db(d, a).to_string());
        }
        out.push('\n');
    }
    out
}

/// The grid's local maxima, one JSON object per line in (delay, azimuth)
/// order.
pub fn write_padp_discrete_jsonl(padp: &Padp) -> Result<String> {
    let mut out = String::new();
    for p in padp.discrete_paths() {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    Ok(out)
}

/// Inclusive sweep of incidence angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSweep {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl AngleSweep {
    /// 0 to 70 degrees in quarter-degree steps.
    pub fn standard() -> Self {
        AngleSweep { start_deg: 0.0, stop_deg: 70.0, step_deg: 0.25 }
    }

    pub fn angles_deg(&self) -> Result<Vec<f64>> {
        if !(self.start_deg.is_finite()
            && self.stop_deg.is_finite()
            && self.start_deg >= 0.0
            && self.stop_deg < 90.0
            && self.stop_deg >= self.start_deg)
        {
            return Err(Error::domain(format!(
                "angle sweep must lie within [0, 90) degrees, got {} to {}",
                self.start_deg, self.stop_deg
            )));
        }
        if !(self.step_deg.is_finite() && self.step_deg > 0.0) {
            return Err(Error::domain(format!(
                "angle step must be positive, got {}",
                self.step_deg
            )));
        }
        let count = ((self.stop_deg - self.start_deg) / self.step_deg + 1.5).floor() as usize;
        Ok((0..count)
            .map(|i| self.start_deg + i as f64 * self.step_deg)
            .filter(|a| *a <= self.stop_deg + 1e-9)
            .collect())
    }
}

/// Penetration loss of one building element against incidence angle, one
/// column per band. Band columns are labeled by the whole GHz part, so the
/// default pair comes out as `loss_db_4g,loss_db_14g`.
pub fn write_loss_curve_csv(
    stack: &LayerStack,
    film_thickness_m: f64,
    materials: &MaterialTable,
    bands_hz: &[f64],
    sweep: AngleSweep,
) -> Result<String> {
    if bands_hz.is_empty() {
        return Err(Error::domain("loss curve needs at least one band"));
    }
    let mut out = String::from("angle_deg");
    for &f in bands_hz {
        out.push_str(&format!(",loss_db_{}g", (f / 1e9).trunc()));
    }
    out.push('\n');
    for angle_deg in sweep.angles_deg()? {
        out.push_str(&angle_deg.to_string());
        for &f in bands_hz {
            let loss =
                element_coefficients(stack, film_thickness_m, materials, angle_deg.to_radians(), f)?
                    .penetration_loss_db();
            out.push(',');
            out.push_str(&loss.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Calibration result as indented JSON, grids and per-link residuals
/// included.
pub fn write_calibration_json(result: &crate::calibration::CalibrationResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)?)
}

/// Comparison of simulated against reference statistics, as indented JSON.
pub fn write_comparison_json(comparison: &LspComparison) -> Result<String> {
    Ok(serde_json::to_string_pretty(comparison)?)
}
