//! Command bodies: input loading, batch runs, output writing and the run
//! manifest.
//!
//! Every command writes its files into one directory and finishes with a
//! `manifest.json` naming the command, the SHA-256 of each input and output
//! file, and the effective parameters, so a run can be verified and
//! reproduced from the directory alone. Output bytes never depend on
//! scheduling, worker count, or the output directory itself.

use crate::{
    CalibrateArgs, Command, CurvesArgs, LspArgs, SceneArgs, SynthObsArgs, SynthSceneArgs,
    TraceArgs,
};
use cloudrt::calibration::{
    calibrate, parse_observations_csv, synthesize_observations, write_observations_csv,
    CalibrationGrids,
};
use cloudrt::channel::{compare_lsps, Lsp};
use cloudrt::error::{Error, Result};
use cloudrt::export::{self, AngleSweep};
use cloudrt::runner::{run_scene, ModelVariant, RunOutput};
use cloudrt::scene::{
    assemble_scene, make_synthetic_scene, parse_scene_points, write_scene_points,
    FilmParameters, PointCloud, Scene, SceneConfig, ShoeboxSpec,
};
use cloudrt::tracer::SearchMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Trace(args) => cmd_trace(args),
        Command::Curves(args) => cmd_curves(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Lsp(args) => cmd_lsp(args),
        Command::SynthScene(args) => cmd_synth_scene(args),
        Command::SynthObs(args) => cmd_synth_obs(args),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(2 * digest.len());
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

fn io_at(path: &Path, error: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        error.kind(),
        format!("{}: {error}", path.display()),
    ))
}

/// Output directory with a record of every file read into and written out
/// of the run.
struct OutDir {
    root: std::path::PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_at(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    /// Reads an input file, remembering its hash under the path as given.
    fn read_input(&mut self, path: &Path) -> Result<String> {
        let bytes = std::fs::read(path).map_err(|e| io_at(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        String::from_utf8(bytes)
            .map_err(|_| Error::parse(1, format!("{}: not valid UTF-8", path.display())))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| io_at(&path, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    /// Writes `manifest.json` last. The output directory itself is not
    /// recorded, so the same run into two directories stays byte-identical.
    fn finish(self, command: &str, parameters: serde_json::Value) -> Result<()> {
        let manifest = json!({
            "command": command,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "parameters": parameters,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| io_at(&path, e))
    }
}

fn load_config(out: &mut OutDir, path: &Option<std::path::PathBuf>) -> Result<SceneConfig> {
    match path {
        Some(p) => {
            let text = out.read_input(p)?;
            SceneConfig::from_toml_str(&text)
        }
        None => Ok(SceneConfig::default()),
    }
}

/// Restricts the configured carrier list to the requested bands, in request
/// order. Band flags are in GHz and must match a configured frequency.
fn select_bands(config: &mut SceneConfig, bands_ghz: &[f64]) -> Result<()> {
    if bands_ghz.is_empty() {
        return Ok(());
    }
    let mut chosen = Vec::new();
    for &ghz in bands_ghz {
        let hz = ghz * 1e9;
        let found = config
            .links
            .carrier_frequencies_hz
            .iter()
            .copied()
            .find(|f| (f - hz).abs() <= 1e-6 * hz);
        match found {
            Some(f) => {
                if !chosen.contains(&f) {
                    chosen.push(f);
                }
            }
            None => {
                let known: Vec<String> = config
                    .links
                    .carrier_frequencies_hz
                    .iter()
                    .map(|f| format!("{}", f / 1e9))
                    .collect();
                return Err(Error::config(format!(
                    "band {ghz} GHz is not configured (configured: {} GHz)",
                    known.join(", ")
                )));
            }
        }
    }
    config.links.carrier_frequencies_hz = chosen;
    Ok(())
}

struct LoadedScene {
    scene: Scene,
    config: SceneConfig,
}

fn load_scene(out: &mut OutDir, args: &SceneArgs) -> Result<LoadedScene> {
    let mut config = load_config(out, &args.config)?;
    select_bands(&mut config, &args.band)?;
    if let Some(bounces) = args.max_bounces {
        config.model.max_bounces = bounces;
    }
    let text = out.read_input(&args.scene)?;
    let points = parse_scene_points(&text)?;
    let cloud = PointCloud::new(points, config.resolution_hint_m)?;
    let scene = assemble_scene(cloud, &config)?;
    Ok(LoadedScene { scene, config })
}

/// Effective model settings of a run, echoed into the manifest.
fn model_parameters(config: &SceneConfig) -> serde_json::Value {
    let bands_ghz: Vec<f64> =
        config.links.carrier_frequencies_hz.iter().map(|f| f / 1e9).collect();
    json!({
        "bands_ghz": bands_ghz,
        "max_bounces": config.model.max_bounces,
        "dynamic_range_db": config.model.dynamic_range_db,
        "delay_limit_ns": config.model.delay_limit_ns,
        "film_triple_m": config.model.triple_glass_film_m,
        "film_double_m": config.model.double_glass_film_m,
    })
}

fn cmd_trace(args: TraceArgs) -> Result<()> {
    let mut out = OutDir::create(&args.out.out_dir)?;
    let loaded = load_scene(&mut out, &args.scene)?;
    let output = run_scene(&loaded.scene, args.variant, SearchMode::Accelerated)?;
    out.write("paths.csv", &export::write_paths_csv(&output.runs)?)?;
    out.write("paths.jsonl", &export::write_paths_jsonl(&output.runs)?)?;
    out.finish(
        "trace",
        json!({
            "model": model_parameters(&loaded.config),
            "variant": args.variant.as_str(),
        }),
    )
}

fn cmd_curves(args: CurvesArgs) -> Result<()> {
    let mut out = OutDir::create(&args.out.out_dir)?;
    let mut config = load_config(&mut out, &args.config)?;
    select_bands(&mut config, &args.band)?;
    let materials = config.material_table()?;
    let stacks = config.stack_set()?;
    let stack = stacks.get(args.element);
    let film_m = match args.film_nm {
        Some(nm) => {
            if !(nm.is_finite() && nm >= 0.0) {
                return Err(Error::domain(format!(
                    "film thickness must be non-negative, got {nm} nm"
                )));
            }
            nm * 1e-9
        }
        None => {
            let film = FilmParameters::new(
                config.model.triple_glass_film_m,
                config.model.double_glass_film_m,
            )?;
            film.for_role(args.element)
        }
    };
    let sweep = AngleSweep {
        start_deg: args.start_deg,
        stop_deg: args.stop_deg,
        step_deg: args.step_deg,
    };
    let text = export::write_loss_curve_csv(
        stack,
        film_m,
        &materials,
        &config.links.carrier_frequencies_hz,
        sweep,
    )?;
    out.write("curves.csv", &text)?;
    let bands_ghz: Vec<f64> =
        config.links.carrier_frequencies_hz.iter().map(|f| f / 1e9).collect();
    out.finish(
        "curves",
        json!({
            "element": args.element.as_str(),
            "film_m": film_m,
            "bands_ghz": bands_ghz,
            "start_deg": args.start_deg,
            "stop_deg": args.stop_deg,
            "step_deg": args.step_deg,
        }),
    )
}

/// `start:stop:step` with inclusive endpoints, or an explicit comma
/// separated list.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let number = |text: &str| -> Result<f64> {
        text.trim()
            .parse()
            .map_err(|_| Error::config(format!("bad grid value `{}`", text.trim())))
    };
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(format!(
                "grid range must be start:stop:step, got `{spec}`"
            )));
        }
        let (start, stop, step) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
        if !(step > 0.0 && stop >= start) {
            return Err(Error::config(format!("grid range must ascend, got `{spec}`")));
        }
        let count = ((stop - start) / step + 1.5).floor() as usize;
        Ok((0..count)
            .map(|i| start + i as f64 * step)
            .filter(|v| *v <= stop + 1e-9 * step)
            .collect())
    } else {
        spec.split(',').map(number).collect()
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let mut out = OutDir::create(&args.out.out_dir)?;
    let loaded = load_scene(&mut out, &args.scene)?;
    let text = out.read_input(&args.observations)?;
    let observations = parse_observations_csv(&text)?;
    let mut grids = CalibrationGrids::default();
    if let Some(spec) = &args.film_grid_nm {
        grids.film_nm = parse_grid(spec)?;
    }
    if let Some(spec) = &args.canopy_grid {
        grids.canopy_db_per_m = parse_grid(spec)?;
    }
    let result = calibrate(&loaded.scene, &observations, &grids, SearchMode::Accelerated)?;
    let mut text = export::write_calibration_json(&result)?;
    text.push('\n');
    out.write("calibration.json", &text)?;
    out.finish(
        "calibrate",
        json!({
            "model": model_parameters(&loaded.config),
            "film_grid_nm": grids.film_nm,
            "canopy_grid_db_per_m": grids.canopy_db_per_m,
            "observations": observations.len(),
        }),
    )
}

/// Row key of one statistics line: link, band and variant together.
fn lsp_key(link_id: &str, frequency_hz: f64, variant: &str) -> String {
    format!("{link_id}@{}g@{variant}", frequency_hz / 1e9)
}

fn simulated_rows(outputs: &[RunOutput]) -> Vec<(String, Lsp)> {
    let mut rows = Vec::new();
    for output in outputs {
        for run in &output.runs {
            rows.push((
                lsp_key(&run.link_id, run.frequency_hz, output.variant.as_str()),
                run.lsp,
            ));
        }
    }
    rows
}

/// Parses a statistics CSV as written by the `lsp` command. The incidence
/// column may be empty and is ignored here.
fn parse_lsp_csv(text: &str) -> Result<Vec<(String, Lsp)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == export::LSP_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::parse(
                1,
                format!(
                    "expected header `{}`, got `{}`",
                    export::LSP_CSV_HEADER,
                    header.trim()
                ),
            ));
        }
        None => return Err(Error::parse(1, "empty statistics file")),
    }
    let mut rows = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                line_no,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let number = |text: &str, what: &str| -> Result<f64> {
            text.trim().parse().map_err(|_| {
                Error::parse(line_no, format!("bad {what} value `{}`", text.trim()))
            })
        };
        let band_ghz = number(fields[1], "band_ghz")?;
        rows.push((
            lsp_key(fields[0].trim(), band_ghz * 1e9, fields[6].trim()),
            Lsp {
                path_loss_db: number(fields[3], "pl_db")?,
                delay_spread_ns: number(fields[4], "ds_ns")?,
                azimuth_spread_deg: number(fields[5], "as_deg")?,
            },
        ));
    }
    Ok(rows)
}

fn cmd_lsp(args: LspArgs) -> Result<()> {
    let mut out = OutDir::create(&args.out.out_dir)?;
    let loaded = load_scene(&mut out, &args.scene)?;
    let mut variants: Vec<ModelVariant> = Vec::new();
    for v in if args.variant.is_empty() { ModelVariant::ALL.to_vec() } else { args.variant } {
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let outputs = variants
        .iter()
        .map(|&v| run_scene(&loaded.scene, v, SearchMode::Accelerated))
        .collect::<Result<Vec<_>>>()?;
    let mut text = String::from(export::LSP_CSV_HEADER);
    text.push('\n');
    for output in &outputs {
        let t = export::write_lsp_csv(output);
        text.push_str(t.split_once('\n').map(|(_, rest)| rest).unwrap_or(""));
    }
    out.write("lsp.csv", &text)?;
    if let Some(path) = &args.reference {
        let reference = parse_lsp_csv(&out.read_input(path)?)?;
        let keys: BTreeSet<&str> = reference.iter().map(|(k, _)| k.as_str()).collect();
        let simulated: Vec<(String, Lsp)> = simulated_rows(&outputs)
            .into_iter()
            .filter(|(k, _)| keys.contains(k.as_str()))
            .collect();
        let comparison = compare_lsps(&simulated, &reference)?;
        let mut text = export::write_comparison_json(&comparison)?;
        text.push('\n');
        out.write("comparison.json", &text)?;
    }
    let variant_names: Vec<&str> = variants.iter().map(|v| v.as_str()).collect();
    out.finish(
        "lsp",
        json!({
            "model": model_parameters(&loaded.config),
            "variants": variant_names,
        }),
    )
}

fn cmd_synth_scene(args: SynthSceneArgs) -> Result<()> {
    let mut out = OutDir::create(&args.out.out_dir)?;
    let canopy_spacing = args.canopy_spacing.unwrap_or(2.5 * args.spacing);
    let spec = ShoeboxSpec {
        facade_width_m: args.facade_width,
        room_depth_m: args.room_depth,
        corridor_depth_m: args.corridor_depth,
        height_m: args.height,
        wall_spacing_m: args.spacing,
        canopy_spacing_m: canopy_spacing,
        ..ShoeboxSpec::default()
    };
    let points = make_synthetic_scene(&spec)?;
    let mut bytes = Vec::new();
    write_scene_points(&mut bytes, &points)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::validation("scene text is not valid UTF-8"))?;
    out.write("scene.xyz", &text)?;
    out.finish(
        "synth-scene",
        json!({
            "spacing_m": args.spacing,
            "canopy_spacing_m": canopy_spacing,
            "facade_width_m": args.facade_width,
            "room_depth_m": args.room_depth,
            "corridor_depth_m": args.corridor_depth,
            "height_m": args.height,
            "points": points.len(),
        }),
    )
}

fn cmd_synth_obs(args: SynthObsArgs) -> Result<()> {
    let mut out = OutDir::create(&args.out.out_dir)?;
    let loaded = load_scene(&mut out, &args.scene)?;
    let film = FilmParameters::new(
        args.film_triple_nm
            .map_or(loaded.scene.model.film.window_triple_m, |nm| nm * 1e-9),
        args.film_double_nm
            .map_or(loaded.scene.model.film.window_double_m, |nm| nm * 1e-9),
    )?;
    if !(args.noise_db.is_finite() && args.noise_db >= 0.0) {
        return Err(Error::domain(format!(
            "noise half-width must be non-negative, got {} dB",
            args.noise_db
        )));
    }
    let links = &loaded.scene.links;
    let jobs = links.carrier_frequencies_hz.len()
        * links.tx_positions.len()
        * links.rx_positions.len();
    let noise: Vec<f64> = if args.noise_db == 0.0 {
        Vec::new()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        (0..jobs).map(|_| rng.gen_range(-args.noise_db..=args.noise_db)).collect()
    };
    let observations = synthesize_observations(
        &loaded.scene,
        film,
        &loaded.scene.model.canopy_loss_db_per_m,
        &noise,
        SearchMode::Accelerated,
    )?;
    out.write("observations.csv", &write_observations_csv(&observations))?;
    out.finish(
        "synth-obs",
        json!({
            "model": model_parameters(&loaded.config),
            "film_triple_m": film.window_triple_m,
            "film_double_m": film.window_double_m,
            "noise_db": args.noise_db,
            "seed": args.seed,
        }),
    )
}
