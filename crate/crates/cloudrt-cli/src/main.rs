//! Command line front end: batch tracing, penetration-loss curves,
//! calibration, channel statistics, and synthetic input generation. Every
//! command leaves its files plus a hashed manifest in one output directory
//! and is deterministic given its inputs, regardless of worker count.

use clap::{Args, Parser, Subcommand};
use cloudrt::runner::ModelVariant;
use cloudrt::scene::StackRole;
use std::path::PathBuf;
use std::process::ExitCode;

mod ops;

const AFTER_HELP: &str = "\
Every flag can also be set through an environment variable with the CLOUDRT_
prefix (flag name upper-cased, dashes as underscores), e.g. CLOUDRT_OUT_DIR;
an explicit flag wins over the variable.

Exit codes:
  0  success
  2  command line or configuration error
  3  input file parse error
  4  numerical domain error
  5  scene or data validation error
  1  any other failure (i/o, serialization)
";

/// Ray-optics simulation of outdoor-to-indoor radio links on labeled point
/// clouds.
#[derive(Parser)]
#[command(name = "cloudrt", version, after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Trace every link of a scene and dump the propagation paths
    Trace(TraceArgs),
    /// Sweep the loss of one building element over the incidence angle
    Curves(CurvesArgs),
    /// Fit window-film thicknesses and canopy losses to observed direct paths
    Calibrate(CalibrateArgs),
    /// Compute large-scale channel statistics per link, band and variant
    Lsp(LspArgs),
    /// Generate the synthetic office scene as a labeled point cloud
    SynthScene(SynthSceneArgs),
    /// Forward-model a scene into a synthetic direct-path observation file
    SynthObs(SynthObsArgs),
}

/// Scene and run-configuration inputs shared by the simulating commands.
#[derive(Args)]
pub struct SceneArgs {
    /// Scene point file (x y z nx ny nz object_id object_class per line)
    #[arg(long, env = "CLOUDRT_SCENE")]
    pub scene: PathBuf,

    /// Run configuration TOML; built-in defaults apply when omitted
    #[arg(long, env = "CLOUDRT_CONFIG")]
    pub config: Option<PathBuf>,

    /// Carrier bands to run, GHz, comma separated; default every configured band
    #[arg(long, env = "CLOUDRT_BAND", value_delimiter = ',')]
    pub band: Vec<f64>,

    /// Reflection cap per path, overriding the configured value
    #[arg(long, env = "CLOUDRT_MAX_BOUNCES")]
    pub max_bounces: Option<u32>,
}

#[derive(Args)]
pub struct OutArgs {
    /// Directory receiving the output files and their manifest
    #[arg(long, env = "CLOUDRT_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub scene: SceneArgs,

    /// Model variant to trace under
    #[arg(
        long,
        env = "CLOUDRT_VARIANT",
        default_value = "full_floor_plan",
        value_parser = parse_variant
    )]
    pub variant: ModelVariant,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct CurvesArgs {
    /// Run configuration TOML; built-in defaults apply when omitted
    #[arg(long, env = "CLOUDRT_CONFIG")]
    pub config: Option<PathBuf>,

    /// Building element to sweep
    #[arg(
        long,
        env = "CLOUDRT_ELEMENT",
        default_value = "window_triple",
        value_parser = parse_role
    )]
    pub element: StackRole,

    /// Film thickness override, nm; default from the configuration
    #[arg(long, env = "CLOUDRT_FILM_NM")]
    pub film_nm: Option<f64>,

    /// Carrier bands, GHz, comma separated; default every configured band
    #[arg(long, env = "CLOUDRT_BAND", value_delimiter = ',')]
    pub band: Vec<f64>,

    /// Sweep start, degrees
    #[arg(long, env = "CLOUDRT_START_DEG", default_value_t = 0.0)]
    pub start_deg: f64,

    /// Sweep stop, degrees, inclusive
    #[arg(long, env = "CLOUDRT_STOP_DEG", default_value_t = 70.0)]
    pub stop_deg: f64,

    /// Sweep step, degrees
    #[arg(long, env = "CLOUDRT_STEP_DEG", default_value_t = 0.25)]
    pub step_deg: f64,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,

    /// Observed direct paths CSV (link_id,band_ghz,tau_ns,phi_deg,gain_db)
    #[arg(long, env = "CLOUDRT_OBSERVATIONS")]
    pub observations: PathBuf,

    /// Film grid override, nm: start:stop:step or v1,v2,...
    #[arg(long, env = "CLOUDRT_FILM_GRID_NM")]
    pub film_grid_nm: Option<String>,

    /// Canopy-loss grid override, dB/m: start:stop:step or v1,v2,...
    #[arg(long, env = "CLOUDRT_CANOPY_GRID")]
    pub canopy_grid: Option<String>,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct LspArgs {
    #[command(flatten)]
    pub scene: SceneArgs,

    /// Model variants to run, comma separated; default all three
    #[arg(long, env = "CLOUDRT_VARIANT", value_delimiter = ',', value_parser = parse_variant)]
    pub variant: Vec<ModelVariant>,

    /// Reference statistics CSV to compare the simulation against
    #[arg(long, env = "CLOUDRT_REFERENCE")]
    pub reference: Option<PathBuf>,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SynthSceneArgs {
    /// Point spacing on walls, metres
    #[arg(long, env = "CLOUDRT_SPACING", default_value_t = 0.1)]
    pub spacing: f64,

    /// Point spacing on canopies, metres; default 2.5 x spacing
    #[arg(long, env = "CLOUDRT_CANOPY_SPACING")]
    pub canopy_spacing: Option<f64>,

    /// Facade width, metres
    #[arg(long, env = "CLOUDRT_FACADE_WIDTH", default_value_t = 18.0)]
    pub facade_width: f64,

    /// Room depth behind the facade, metres
    #[arg(long, env = "CLOUDRT_ROOM_DEPTH", default_value_t = 4.0)]
    pub room_depth: f64,

    /// Corridor depth behind the rooms, metres
    #[arg(long, env = "CLOUDRT_CORRIDOR_DEPTH", default_value_t = 2.0)]
    pub corridor_depth: f64,

    /// Storey height, metres
    #[arg(long, env = "CLOUDRT_HEIGHT", default_value_t = 3.0)]
    pub height: f64,

    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SynthObsArgs {
    #[command(flatten)]
    pub scene: SceneArgs,

    /// Triple-glass film of the forward model, nm; default from the configuration
    #[arg(long, env = "CLOUDRT_FILM_TRIPLE_NM")]
    pub film_triple_nm: Option<f64>,

    /// Double-glass film of the forward model, nm; default from the configuration
    #[arg(long, env = "CLOUDRT_FILM_DOUBLE_NM")]
    pub film_double_nm: Option<f64>,

    /// Half-width of the uniform gain noise, dB; 0 for noise-free
    #[arg(long, env = "CLOUDRT_NOISE_DB", default_value_t = 0.0)]
    pub noise_db: f64,

    /// Seed of the noise generator
    #[arg(long, env = "CLOUDRT_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_variant(text: &str) -> Result<ModelVariant, String> {
    text.parse().map_err(|e: cloudrt::Error| e.to_string())
}

fn parse_role(text: &str) -> Result<StackRole, String> {
    StackRole::ALL.into_iter().find(|r| r.as_str() == text).ok_or_else(|| {
        format!(
            "unknown element `{text}` (expected one of {})",
            StackRole::ALL.map(|r| r.as_str()).join(", ")
        )
    })
}

/// Maps each failure class onto its documented exit code.
fn exit_class(error: &cloudrt::Error) -> u8 {
    match error {
        cloudrt::Error::Config(_) => 2,
        cloudrt::Error::Parse { .. } => 3,
        cloudrt::Error::Domain(_) => 4,
        cloudrt::Error::Validation(_) => 5,
        cloudrt::Error::Io(_) | cloudrt::Error::Serialize(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match ops::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_class(&error))
        }
    }
}
