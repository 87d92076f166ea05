//! `terragan`: dataset building, training and terrain generation from the
//! command line. Every subcommand writes its artifacts plus a JSON run
//! report into `--out`.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};
use terragan::pix2pix::Direction;
use terragan::terrain::MeshFormat;
use terragan::ErrorKind;

use config::RunConfig;
use report::Run;

#[derive(Debug, Parser)]
#[command(name = "terragan", version, about = "Procedural terrain from adversarial networks")]
struct Cli {
    /// JSON run config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tile a DEM raster, fetch imagery per tile and write a paired dataset.
    BuildDataset(SourceArgs),
    /// Elevation range and tiling report for a DEM raster.
    Stats(SourceArgs),
    /// Train the progressive GAN on the RGB tiles of a dataset.
    TrainProgan(ProganArgs),
    /// Train a translation model (RGB to DEM or back).
    TrainPix2pix(Pix2pixArgs),
    /// Sample RGB tiles, translate them to DEMs and write a tile dataset
    /// plus meshes.
    Generate(GenerateArgs),
    /// Perlin height field, optionally colorized by an inverse model.
    Perlin(PerlinArgs),
    /// Walk between two latent vectors and render every step.
    Interpolate(InterpolateArgs),
    /// Mesh one tile pair of a dataset.
    ExportMesh(ExportArgs),
    /// Finite-difference gradient checks of every differentiable operation.
    GradCheck(GradCheckArgs),
}

// Flag names mirror config keys; unset flags serialize to null and are
// ignored when merging.

#[derive(Debug, Args, Serialize)]
struct SourceArgs {
    #[arg(long)]
    fixture_dir: Option<PathBuf>,
    #[arg(long)]
    dem: Option<PathBuf>,
    #[arg(long)]
    imagery: Option<ImagerySourceArg>,
    #[arg(long)]
    imagery_endpoint: Option<String>,
    #[arg(long)]
    tile_size: Option<usize>,
    #[arg(long)]
    retries: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ImagerySourceArg {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LossArg {
    NonSaturating,
    Minimax,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum NoiseArg {
    Normal,
    Uniform,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    d_steps_per_g_step: Option<usize>,
    #[arg(long)]
    generator_loss: Option<LossArg>,
    #[arg(long)]
    max_resolution: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct ProganArgs {
    #[command(flatten)]
    #[serde(flatten)]
    train: TrainArgs,
    #[arg(long)]
    target_resolution: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    noise: Option<NoiseArg>,
    #[arg(long)]
    channels_base: Option<usize>,
    #[arg(long)]
    channels_min: Option<usize>,
    #[arg(long)]
    iterations_per_stage: Option<usize>,
    #[arg(long)]
    fade_fraction: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct Pix2pixArgs {
    #[command(flatten)]
    #[serde(flatten)]
    train: TrainArgs,
    /// rgb-to-dem or dem-to-rgb.
    #[arg(long)]
    direction: Option<Direction>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    unet_depth: Option<usize>,
    #[arg(long)]
    unet_base_channels: Option<usize>,
    #[arg(long)]
    patch_depth: Option<usize>,
    #[arg(long)]
    patch_base_channels: Option<usize>,
    #[arg(long)]
    l1_weight: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct MeshArgs {
    #[arg(long)]
    vertical_scale: Option<f64>,
    /// ply or obj.
    #[arg(long)]
    mesh_format: Option<MeshFormat>,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long)]
    progan_checkpoint: Option<PathBuf>,
    #[arg(long)]
    translation_checkpoint: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    mesh: MeshArgs,
}

#[derive(Debug, Args, Serialize)]
struct PerlinArgs {
    #[arg(long)]
    perlin_size: Option<usize>,
    #[arg(long)]
    perlin_base_frequency: Option<f64>,
    #[arg(long)]
    perlin_octaves: Option<usize>,
    #[arg(long)]
    perlin_persistence: Option<f64>,
    #[arg(long)]
    perlin_lacunarity: Option<f64>,
    /// Color the field with `inverse_checkpoint` and mesh it.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    colorize: bool,
    #[arg(long)]
    inverse_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    mesh: MeshArgs,
}

#[derive(Debug, Args, Serialize)]
struct InterpolateArgs {
    #[arg(long)]
    progan_checkpoint: Option<PathBuf>,
    /// Also translate every frame to a DEM.
    #[arg(long)]
    translation_checkpoint: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct ExportArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    tile_index: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    mesh: MeshArgs,
}

#[derive(Debug, Args, Serialize)]
struct GradCheckArgs {
    #[arg(long)]
    instances: Option<usize>,
}

fn overrides(args: &impl Serialize) -> Map<String, Value> {
    match serde_json::to_value(args) {
        Ok(Value::Object(map)) => map,
        _ => Map::new(),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildDataset(_) => "build-dataset",
            Command::Stats(_) => "stats",
            Command::TrainProgan(_) => "train-progan",
            Command::TrainPix2pix(_) => "train-pix2pix",
            Command::Generate(_) => "generate",
            Command::Perlin(_) => "perlin",
            Command::Interpolate(_) => "interpolate",
            Command::ExportMesh(_) => "export-mesh",
            Command::GradCheck(_) => "grad-check",
        }
    }

    fn overrides(&self) -> Map<String, Value> {
        match self {
            Command::BuildDataset(a) | Command::Stats(a) => overrides(a),
            Command::TrainProgan(a) => overrides(a),
            Command::TrainPix2pix(a) => overrides(a),
            Command::Generate(a) => overrides(a),
            Command::Perlin(a) => overrides(a),
            Command::Interpolate(a) => overrides(a),
            Command::ExportMesh(a) => overrides(a),
            Command::GradCheck(a) => overrides(a),
        }
    }
}

fn run(cli: Cli) -> terragan::Result<Value> {
    let mut keys = cli.command.overrides();
    keys.insert("seed".into(), serde_json::to_value(cli.seed).unwrap_or(Value::Null));
    keys.insert("out".into(), serde_json::to_value(&cli.out).unwrap_or(Value::Null));
    let config = RunConfig::resolve(cli.config.as_deref(), keys)?;
    log::debug!("resolved config: {config:?}");
    let run = Run::new(cli.command.name(), config)?;
    match cli.command {
        Command::BuildDataset(_) => commands::build(run),
        Command::Stats(_) => commands::stats(run),
        Command::TrainProgan(_) => commands::train_progan(run),
        Command::TrainPix2pix(_) => commands::train_pix2pix(run),
        Command::Generate(_) => commands::generate(run),
        Command::Perlin(_) => commands::perlin(run),
        Command::Interpolate(_) => commands::interpolate(run),
        Command::ExportMesh(_) => commands::export(run),
        Command::GradCheck(_) => commands::grad_check(run),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Contract => 3,
    }
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            report_error("usage", e.kind().as_str().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = e.kind();
            let label = match kind {
                ErrorKind::Usage => "usage",
                ErrorKind::Data => "data",
                ErrorKind::Contract => "contract",
            };
            report_error(label, &e.to_string());
            ExitCode::from(exit_code(kind))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use terragan::gan::{GeneratorLoss, NoiseDistribution};
    use terragan::Error;

    #[test]
    fn unset_flags_do_not_override() {
        let cli = Cli::try_parse_from(["terragan", "train-pix2pix", "--direction", "dem-to-rgb", "--iterations", "3"]).unwrap();
        let keys = cli.command.overrides();
        assert_eq!(keys["direction"], "dem_to_rgb");
        assert_eq!(keys["iterations"], 3);
        let config = RunConfig::resolve(None, keys).unwrap();
        assert_eq!(config.direction, Direction::DemToRgb);
        assert_eq!(config.unet_depth, RunConfig::default().unet_depth);
    }

    #[test]
    fn every_flag_names_a_config_key() {
        let argv = [
            "terragan", "perlin", "--colorize", "--perlin-size", "16", "--mesh-format", "obj", "--vertical-scale", "0.5",
        ];
        let cli = Cli::try_parse_from(argv).unwrap();
        let config = RunConfig::resolve(None, cli.command.overrides()).unwrap();
        assert!(config.colorize);
        assert_eq!((config.perlin_size, config.mesh_format), (16, MeshFormat::Obj));
        for argv in [
            vec!["terragan", "train-progan", "--noise", "uniform", "--generator-loss", "minimax"],
            vec!["terragan", "build-dataset", "--imagery", "http"],
        ] {
            let cli = Cli::try_parse_from(argv).unwrap();
            RunConfig::resolve(None, cli.command.overrides()).unwrap();
        }
    }

    #[test]
    fn enum_flags_match_config_values() {
        let cli = Cli::try_parse_from(["terragan", "train-progan", "--noise", "uniform", "--generator-loss", "minimax"]).unwrap();
        let config = RunConfig::resolve(None, cli.command.overrides()).unwrap();
        assert_eq!(config.noise, NoiseDistribution::Uniform);
        assert_eq!(config.generator_loss, GeneratorLoss::Minimax);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(Error::Config("x".into()).kind()), 1);
        assert_eq!(exit_code(Error::EmptyData("x".into()).kind()), 2);
        assert_eq!(exit_code(Error::Contract("x".into()).kind()), 3);
    }
}
