use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use terragan::gan::{GeneratorLoss, NoiseDistribution, TrainConfig};
use terragan::geodata::fixture;
use terragan::pix2pix::{Direction, PatchConfig, TranslationConfig};
use terragan::progan::{ChannelPlan, ProGanConfig};
use terragan::terrain::{MeshFormat, PerlinParams, DEFAULT_VERTICAL_SCALE};
use terragan::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagerySource {
    /// `<fixture_dir>/imagery/<digest>.rgb` files.
    Mock,
    Http,
}

/// Every knob of every subcommand in one flat document. Unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,

    pub fixture_dir: Option<PathBuf>,
    /// Elevation raster; defaults to the fixture ROI grid.
    pub dem: Option<PathBuf>,
    pub imagery: ImagerySource,
    pub imagery_endpoint: String,
    pub tile_size: usize,
    pub retries: usize,
    /// Paired dataset read by the training and export commands.
    pub dataset: Option<PathBuf>,

    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub generator_loss: GeneratorLoss,
    /// Largest training resolution accepted without editing the config.
    pub max_resolution: usize,

    pub target_resolution: usize,
    pub latent_dim: usize,
    pub noise: NoiseDistribution,
    pub channels_base: usize,
    pub channels_min: usize,
    pub iterations_per_stage: usize,
    pub fade_fraction: f64,

    pub direction: Direction,
    pub iterations: usize,
    pub resolution: usize,
    pub unet_depth: usize,
    pub unet_base_channels: usize,
    pub patch_depth: usize,
    pub patch_base_channels: usize,
    pub l1_weight: f64,

    pub progan_checkpoint: Option<PathBuf>,
    /// rgb_to_dem model used by `generate` and `interpolate`.
    pub translation_checkpoint: Option<PathBuf>,
    /// dem_to_rgb model used by `perlin --colorize`.
    pub inverse_checkpoint: Option<PathBuf>,

    pub count: usize,
    pub steps: usize,
    pub vertical_scale: f64,
    pub mesh_format: MeshFormat,
    pub tile_index: usize,

    pub perlin_size: usize,
    pub perlin_base_frequency: f64,
    pub perlin_octaves: usize,
    pub perlin_persistence: f64,
    pub perlin_lacunarity: f64,
    pub colorize: bool,

    pub instances: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let progan = ProGanConfig::default();
        let translation = TranslationConfig::default();
        let perlin = PerlinParams::default();
        let train = TrainConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            fixture_dir: None,
            dem: None,
            imagery: ImagerySource::Mock,
            imagery_endpoint: "http://localhost:8080/imagery".into(),
            tile_size: fixture::ROI_TILE,
            retries: 2,
            dataset: None,
            batch_size: train.batch_size,
            d_steps_per_g_step: train.d_steps_per_g_step,
            generator_loss: train.generator_loss,
            max_resolution: 32,
            target_resolution: progan.target_resolution,
            latent_dim: progan.latent_dim,
            noise: progan.noise,
            channels_base: progan.channels.base,
            channels_min: progan.channels.min,
            iterations_per_stage: 1000,
            fade_fraction: 0.5,
            direction: translation.direction,
            iterations: train.iterations,
            resolution: translation.resolution,
            unet_depth: translation.unet_depth,
            unet_base_channels: translation.base_channels,
            patch_depth: translation.patch.depth,
            patch_base_channels: translation.patch.base_channels,
            l1_weight: translation.l1_weight,
            progan_checkpoint: None,
            translation_checkpoint: None,
            inverse_checkpoint: None,
            count: 1,
            steps: 8,
            vertical_scale: DEFAULT_VERTICAL_SCALE,
            mesh_format: MeshFormat::PlyAscii,
            tile_index: 0,
            perlin_size: 32,
            perlin_base_frequency: perlin.base_frequency,
            perlin_octaves: perlin.octaves,
            perlin_persistence: perlin.persistence,
            perlin_lacunarity: perlin.lacunarity,
            colorize: false,
            instances: 50,
        }
    }
}

fn config_error(context: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{context}: {e}"))
}

impl RunConfig {
    /// The config file (if any) with `overrides` applied key by key. Each
    /// override goes through the same strict parsing as the file. A run
    /// report is accepted in place of a config file.
    pub fn resolve(path: Option<&Path>, overrides: Map<String, Value>) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| config_error(&p.display().to_string(), e))?;
                let mut value: Value = serde_json::from_str(&text).map_err(|e| config_error(&p.display().to_string(), e))?;
                // A run report re-executes with the config it recorded.
                if let Some(recorded) = value.get("config").filter(|_| value.get("config_digest").is_some()) {
                    let digest = terragan::checkpoint::config_digest(recorded)?;
                    if value["config_digest"] != digest.as_str() {
                        return Err(Error::Config(format!("{}: config digest does not match", p.display())));
                    }
                    value = recorded.clone();
                }
                // Validate the file on its own so errors name the file.
                serde_json::from_value::<RunConfig>(value.clone()).map_err(|e| config_error(&p.display().to_string(), e))?;
                value
            }
            None => Value::Object(Map::new()),
        };
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        for (k, v) in overrides {
            if !v.is_null() {
                obj.insert(k, v);
            }
        }
        serde_json::from_value(doc).map_err(|e| config_error("config", e))
    }

    pub fn digest(&self) -> Result<String> {
        terragan::checkpoint::config_digest(self)
    }

    fn check_resolution(&self, what: &str, r: usize) -> Result<()> {
        if r > self.max_resolution {
            return Err(Error::Config(format!(
                "{what} {r} exceeds max_resolution {}; raise it in the config for full-scale runs",
                self.max_resolution
            )));
        }
        Ok(())
    }

    pub fn train(&self, iterations: usize) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            iterations,
            d_steps_per_g_step: self.d_steps_per_g_step,
            generator_loss: self.generator_loss,
            seed: self.seed,
        }
    }

    pub fn progan(&self) -> Result<ProGanConfig> {
        self.check_resolution("target_resolution", self.target_resolution)?;
        Ok(ProGanConfig {
            latent_dim: self.latent_dim,
            noise: self.noise,
            channels: ChannelPlan {
                base: self.channels_base,
                min: self.channels_min,
            },
            target_resolution: self.target_resolution,
        })
    }

    pub fn translation(&self) -> Result<TranslationConfig> {
        self.check_resolution("resolution", self.resolution)?;
        Ok(TranslationConfig {
            direction: self.direction,
            resolution: self.resolution,
            unet_depth: self.unet_depth,
            base_channels: self.unet_base_channels,
            patch: PatchConfig {
                depth: self.patch_depth,
                base_channels: self.patch_base_channels,
            },
            l1_weight: self.l1_weight,
        })
    }

    pub fn perlin(&self) -> PerlinParams {
        PerlinParams {
            seed: self.seed,
            base_frequency: self.perlin_base_frequency,
            octaves: self.perlin_octaves,
            persistence: self.perlin_persistence,
            lacunarity: self.perlin_lacunarity,
        }
    }

    pub fn fixture_dir(&self) -> Result<&Path> {
        self.fixture_dir
            .as_deref()
            .ok_or_else(|| Error::Config("fixture_dir is not set".into()))
    }

    pub fn dem_path(&self) -> Result<PathBuf> {
        match &self.dem {
            Some(p) => Ok(p.clone()),
            None => Ok(self.fixture_dir()?.join(fixture::DEM_FILE)),
        }
    }

    pub fn required<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{key} is not set")))
    }
}
