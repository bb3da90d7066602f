//! Batch simulation across a scene's link set, with the model-variant
//! switches used for ablation studies.

use crate::channel::{
    apply_gains, compute_lsps, path_samples, Lsp, PathGainModel, PathSample,
};
use crate::error::{Error, Result};
use crate::scene::{FilmParameters, ObjectClass, PointCloud, Scene};
use crate::tracer::{trace_link, InteractionKind, PropagationPath, SearchMode, TracerOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Which parts of the model a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Everything: interior partitions, window films, canopies.
    #[default]
    FullFloorPlan,
    /// Interior partitions removed; only the building shell, outdoor
    /// structures, and canopies remain.
    ExteriorsOnly,
    /// Full geometry but the window coating thickness forced to zero.
    NoMetalFilm,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [
        ModelVariant::FullFloorPlan,
        ModelVariant::ExteriorsOnly,
        ModelVariant::NoMetalFilm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::FullFloorPlan => "full_floor_plan",
            ModelVariant::ExteriorsOnly => "exteriors_only",
            ModelVariant::NoMetalFilm => "no_metal_film",
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown model variant `{s}` (expected one of full_floor_plan, \
                     exteriors_only, no_metal_film)"
                ))
            })
    }
}

/// The cloud a variant actually traces against.
pub fn variant_cloud(cloud: &PointCloud, variant: ModelVariant) -> Result<PointCloud> {
    match variant {
        ModelVariant::ExteriorsOnly => {
            cloud.filter(|p| p.class != ObjectClass::InteriorWall)
        }
        ModelVariant::FullFloorPlan | ModelVariant::NoMetalFilm => {
            cloud.filter(|_| true)
        }
    }
}

/// The film thicknesses a variant applies.
pub fn variant_film(film: FilmParameters, variant: ModelVariant) -> FilmParameters {
    match variant {
        ModelVariant::NoMetalFilm => FilmParameters::zero(),
        ModelVariant::FullFloorPlan | ModelVariant::ExteriorsOnly => film,
    }
}

/// Everything simulated for one link at one band.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRun {
    pub link_id: String,
    pub tx_index: usize,
    pub rx_index: usize,
    pub frequency_hz: f64,
    /// Direct path first, then reflections in (delay, azimuth) order; all
    /// gains filled.
    pub paths: Vec<PropagationPath>,
    pub samples: Vec<PathSample>,
    pub lsp: Lsp,
    /// Incidence angle at the first window the direct path crosses, in
    /// degrees; `None` for links that never pass a window.
    pub direct_window_incidence_deg: Option<f64>,
}

/// One full batch: every link of the set at every carrier band.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub variant: ModelVariant,
    /// Ordered by band, then transmitter index, then receiver index.
    pub runs: Vec<LinkRun>,
}

/// Run the whole scene under a variant. Work is parallel across links; the
/// output order never depends on scheduling.
pub fn run_scene(scene: &Scene, variant: ModelVariant, mode: SearchMode) -> Result<RunOutput> {
    scene.model.validate()?;
    scene.links.validate()?;
    if scene.links.tx_positions.is_empty() || scene.links.rx_positions.is_empty() {
        return Err(Error::config("scene has no links to run"));
    }
    let cloud = variant_cloud(&scene.cloud, variant)?;
    let film = variant_film(scene.model.film, variant);
    let options = TracerOptions {
        max_bounces: scene.model.max_bounces,
        delay_limit_s: scene.model.delay_limit_ns * 1e-9,
        mode,
    };
    let jobs: Vec<(f64, usize, usize)> = scene
        .links
        .carrier_frequencies_hz
        .iter()
        .flat_map(|&f| scene.links.pairs().map(move |(t, r)| (f, t, r)))
        .collect();
    let runs = jobs
        .into_par_iter()
        .map(|(frequency_hz, tx_index, rx_index)| {
            let tx = scene.links.tx_positions[tx_index];
            let rx = scene.links.rx_positions[rx_index];
            let canopy = scene.model.canopy_loss_db_per_m(frequency_hz)?;
            let gain_model = PathGainModel::new(film, canopy)?;
            let traced = trace_link(&cloud, &tx, &rx, frequency_hz, &options)?;
            let mut paths = traced.into_paths();
            apply_gains(
                &mut paths,
                &scene.stacks,
                &scene.materials,
                &gain_model,
                frequency_hz,
            )?;
            let samples = path_samples(&paths)?;
            let lsp = compute_lsps(&samples, scene.model.dynamic_range_db)?;
            let direct_window_incidence_deg = direct_window_incidence(&paths[0]);
            Ok(LinkRun {
                link_id: crate::scene::LinkSet::link_id(tx_index, rx_index),
                tx_index,
                rx_index,
                frequency_hz,
                paths,
                samples,
                lsp,
                direct_window_incidence_deg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput { variant, runs })
}

/// Incidence angle at the first window crossed by the direct path.
fn direct_window_incidence(direct: &PropagationPath) -> Option<f64> {
    direct
        .interactions
        .iter()
        .find(|i| i.kind == InteractionKind::WindowPenetration)
        .map(|i| i.incidence_angle_rad.to_degrees())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{
        assemble_scene, make_synthetic_scene, SceneConfig, ShoeboxSpec,
    };

    fn office() -> Scene {
        let spec = ShoeboxSpec {
            wall_spacing_m: 0.3,
            canopy_spacing_m: 0.5,
            ..ShoeboxSpec::default()
        };
        let points = make_synthetic_scene(&spec).unwrap();
        let cloud = PointCloud::new(points, spec.wall_spacing_m).unwrap();
        let mut config = SceneConfig::default();
        config.resolution_hint_m = spec.wall_spacing_m;
        config.links.carrier_frequencies_hz = vec![4.65e9];
        config.links.tx_positions_m = vec![[9.0, -15.0, 1.5]];
        config.links.rx_positions_m = vec![[3.0, 2.0, 1.5], [15.0, 2.0, 1.5]];
        config.model.max_bounces = 2;
        assemble_scene(cloud, &config).unwrap()
    }

    #[test]
    fn full_run_covers_every_link_in_order() {
        let scene = office();
        let out = run_scene(&scene, ModelVariant::FullFloorPlan, SearchMode::Accelerated)
            .unwrap();
        assert_eq!(out.runs.len(), 2);
        assert_eq!(out.runs[0].link_id, "t0r0");
        assert_eq!(out.runs[1].link_id, "t0r1");
        for run in &out.runs {
            // Direct path first, annotated, through a window.
            assert_eq!(run.paths[0].bounce_count(), 0);
            assert!(run.paths[0].gain_db.is_some());
            assert!(run.direct_window_incidence_deg.is_some());
            assert!(run.paths.len() > 1, "reflections expected in a furnished scene");
            assert!(run.lsp.path_loss_db > 0.0);
        }
    }

    #[test]
    fn exteriors_variant_never_touches_interior_walls() {
        let scene = office();
        let out =
            run_scene(&scene, ModelVariant::ExteriorsOnly, SearchMode::Accelerated).unwrap();
        for run in &out.runs {
            for path in &run.paths {
                for i in &path.interactions {
                    assert_ne!(i.kind, InteractionKind::InteriorWallPenetration);
                    assert_ne!(i.class, ObjectClass::InteriorWall);
                }
            }
        }
    }

    #[test]
    fn film_variant_changes_gains_but_not_geometry() {
        let scene = office();
        let with_film =
            run_scene(&scene, ModelVariant::FullFloorPlan, SearchMode::Accelerated).unwrap();
        let without =
            run_scene(&scene, ModelVariant::NoMetalFilm, SearchMode::Accelerated).unwrap();
        for (a, b) in with_film.runs.iter().zip(without.runs.iter()) {
            assert_eq!(a.paths.len(), b.paths.len());
            for (pa, pb) in a.paths.iter().zip(b.paths.iter()) {
                assert_eq!(pa.geometric_length_m, pb.geometric_length_m);
                assert_eq!(pa.aoa_azimuth_deg, pb.aoa_azimuth_deg);
            }
            // The default film is thin but must still cost something at the
            // window crossings of the direct path.
            let ga = a.paths[0].gain_db.unwrap();
            let gb = b.paths[0].gain_db.unwrap();
            assert!(gb > ga, "removing the film must strengthen the direct path");
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let scene = office();
        let a = run_scene(&scene, ModelVariant::FullFloorPlan, SearchMode::Accelerated).unwrap();
        let b = run_scene(&scene, ModelVariant::FullFloorPlan, SearchMode::Accelerated).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_without_links_is_rejected() {
        let mut scene = office();
        scene.links.rx_positions.clear();
        assert!(run_scene(&scene, ModelVariant::FullFloorPlan, SearchMode::Accelerated).is_err());
    }
}
