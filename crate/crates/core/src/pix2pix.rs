//! Conditional image-to-image translation: a U-Net generator with encoder
//! to decoder skip connections and a PatchGAN discriminator that scores
//! local patches of `(condition, candidate)` pairs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{discriminator_loss_on_graph, generator_loss_on_graph, GeneratorLoss, TrainConfig};
use crate::graph::{Graph, Var};
use crate::nn::{Conv2dLayer, ConvTranspose2dLayer};
use crate::param::{Optimizer, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

const SLOPE: f64 = 0.2;
const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PADDING: usize = 1;
pub const DEFAULT_L1_WEIGHT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    RgbToDem,
    DemToRgb,
}

impl Direction {
    /// `(input_channels, output_channels)`.
    pub fn channels(self) -> (usize, usize) {
        match self {
            Direction::RgbToDem => (3, 1),
            Direction::DemToRgb => (1, 3),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::RgbToDem => "rgb_to_dem",
            Direction::DemToRgb => "dem_to_rgb",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb_to_dem" | "rgb-to-dem" => Ok(Direction::RgbToDem),
            "dem_to_rgb" | "dem-to-rgb" => Ok(Direction::DemToRgb),
            other => Err(Error::Config(format!(
                "unknown direction {other:?} (expected rgb_to_dem or dem_to_rgb)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub input_channels: usize,
    pub output_channels: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub resolution: usize,
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.input_channels == 0 || self.output_channels == 0 {
            return Err(Error::Config("U-Net depth and channel counts must be positive".into()));
        }
        if !self.resolution.is_power_of_two() || self.depth >= usize::BITS as usize || self.resolution >> self.depth == 0 {
            return Err(Error::Config(format!(
                "U-Net resolution {} must be a power of two of at least 2^{}",
                self.resolution, self.depth
            )));
        }
        Ok(())
    }

    /// Width of encoder level `i`: base doubled per level, capped at 8x base.
    pub fn width(&self, level: usize) -> usize {
        self.base_channels << level.min(3)
    }

    pub fn bottleneck_size(&self) -> usize {
        self.resolution >> self.depth
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UNet {
    config: UNetConfig,
    encoder: Vec<Conv2dLayer>,
    decoder: Vec<ConvTranspose2dLayer>,
    zero_bottleneck: bool,
}

impl UNet {
    pub fn new(store: &mut ParamStore<f32>, prefix: &str, config: UNetConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut encoder = Vec::with_capacity(config.depth);
        let mut cin = config.input_channels;
        for i in 0..config.depth {
            let cout = config.width(i);
            encoder.push(Conv2dLayer::create(
                store,
                &format!("{prefix}.enc{i}"),
                cin,
                cout,
                KERNEL,
                STRIDE,
                PADDING,
                rng,
            )?);
            cin = cout;
        }
        let mut decoder = Vec::with_capacity(config.depth);
        for j in (1..config.depth).rev() {
            let cout = config.width(j - 1);
            decoder.push(ConvTranspose2dLayer::create(
                store,
                &format!("{prefix}.dec{j}"),
                cin,
                cout,
                KERNEL,
                STRIDE,
                PADDING,
                rng,
            )?);
            cin = 2 * cout;
        }
        decoder.push(ConvTranspose2dLayer::create(
            store,
            &format!("{prefix}.dec0"),
            cin,
            config.output_channels,
            KERNEL,
            STRIDE,
            PADDING,
            rng,
        )?);
        Ok(Self {
            config,
            encoder,
            decoder,
            zero_bottleneck: false,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    /// Copy whose bottleneck activation is replaced by zeros, leaving only
    /// the skip connections to carry information.
    pub fn without_bottleneck(&self) -> Self {
        Self {
            zero_bottleneck: true,
            ..self.clone()
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, c: Var) -> Result<Var> {
        let cfg = &self.config;
        let shape = g.value(c).shape().to_vec();
        if shape.len() != 4 || shape[1] != cfg.input_channels || shape[2] != cfg.resolution || shape[3] != cfg.resolution {
            return Err(Error::Shape(format!(
                "U-Net expects [*, {}, {r}, {r}], got {shape:?}",
                cfg.input_channels,
                r = cfg.resolution
            )));
        }
        let mut skips = Vec::with_capacity(cfg.depth);
        let mut h = c;
        for layer in &self.encoder {
            let a = layer.forward(g, params, h)?;
            h = g.leaky_relu(a, SLOPE)?;
            skips.push(h);
        }
        if self.zero_bottleneck {
            h = g.affine(h, 0.0, 0.0);
        }
        let (last, inner) = self.decoder.split_last().expect("decoder has a final layer");
        for (layer, skip) in inner.iter().zip(skips[..cfg.depth - 1].iter().rev()) {
            let a = layer.forward(g, params, h)?;
            let a = g.leaky_relu(a, SLOPE)?;
            h = g.concat_channels(a, *skip)?;
        }
        let out = last.forward(g, params, h)?;
        Ok(g.tanh(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_channels: 16,
        }
    }
}

impl PatchConfig {
    /// Side of the score grid for a square input of side `resolution`.
    pub fn grid_extent(&self, resolution: usize) -> usize {
        resolution >> self.depth
    }

    /// Input footprint of one score cell.
    pub fn receptive_field(&self) -> ReceptiveField {
        let mut size = 1;
        for _ in 0..self.depth {
            size = (size - 1) * STRIDE + KERNEL;
        }
        let mut offset = 0;
        let mut jump = 1;
        for _ in 0..self.depth {
            offset += PADDING * jump;
            jump *= STRIDE;
        }
        ReceptiveField {
            size,
            stride: jump,
            offset,
        }
    }
}

/// Cell `p` of the score grid sees input rows (and, identically, columns)
/// `p * stride - offset ..= p * stride - offset + size - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub size: usize,
    pub stride: usize,
    pub offset: usize,
}

impl ReceptiveField {
    pub fn covers(&self, cell: usize, pixel: usize) -> bool {
        let start = (cell * self.stride) as isize - self.offset as isize;
        let p = pixel as isize;
        p >= start && p < start + self.size as isize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGan {
    config: PatchConfig,
    condition_channels: usize,
    candidate_channels: usize,
    layers: Vec<Conv2dLayer>,
}

impl PatchGan {
    pub fn new(
        store: &mut ParamStore<f32>,
        prefix: &str,
        condition_channels: usize,
        candidate_channels: usize,
        config: PatchConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        if config.depth == 0 || config.base_channels == 0 {
            return Err(Error::Config("PatchGAN depth and width must be positive".into()));
        }
        let mut layers = Vec::with_capacity(config.depth);
        let mut cin = condition_channels + candidate_channels;
        for l in 0..config.depth {
            let cout = if l + 1 == config.depth {
                1
            } else {
                config.base_channels << l.min(3)
            };
            layers.push(Conv2dLayer::create(
                store,
                &format!("{prefix}.conv{l}"),
                cin,
                cout,
                KERNEL,
                STRIDE,
                PADDING,
                rng,
            )?);
            cin = cout;
        }
        Ok(Self {
            config,
            condition_channels,
            candidate_channels,
            layers,
        })
    }

    pub fn config(&self) -> &PatchConfig {
        &self.config
    }

    /// Per-patch scores `[B, 1, P, P]` in (0, 1).
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, c: Var, candidate: Var) -> Result<Var> {
        let [_, cc, h, w] = g.value(c).dims4()?;
        let [_, yc, yh, yw] = g.value(candidate).dims4()?;
        if cc != self.condition_channels || yc != self.candidate_channels || (h, w) != (yh, yw) {
            return Err(Error::Shape(format!(
                "PatchGAN expects condition with {} and candidate with {} channels on the same grid, got {:?} and {:?}",
                self.condition_channels,
                self.candidate_channels,
                g.value(c).shape(),
                g.value(candidate).shape()
            )));
        }
        if h != w || h >> self.config.depth == 0 || h % (1 << self.config.depth) != 0 {
            return Err(Error::Shape(format!(
                "PatchGAN of depth {} needs a square input divisible by {}, got {h}x{w}",
                self.config.depth,
                1 << self.config.depth
            )));
        }
        let mut x = g.concat_channels(c, candidate)?;
        let (last, inner) = self.layers.split_last().expect("at least one layer");
        for layer in inner {
            let a = layer.forward(g, params, x)?;
            x = g.leaky_relu(a, SLOPE)?;
        }
        let logits = last.forward(g, params, x)?;
        Ok(g.sigmoid(logits))
    }
}

/// Per-image mean of a `[B, 1, P, P]` score grid.
pub fn patch_decision<T: Scalar>(scores: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, p, q] = scores.dims4()?;
    let per = c * p * q;
    let data = scores
        .data()
        .chunks(per)
        .map(|cell| cell.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_f64(per as f64))
        .collect();
    Tensor::from_vec(&[b], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationConfig {
    pub direction: Direction,
    pub resolution: usize,
    pub unet_depth: usize,
    pub base_channels: usize,
    pub patch: PatchConfig,
    pub l1_weight: f64,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            direction: Direction::RgbToDem,
            resolution: 32,
            unet_depth: 3,
            base_channels: 16,
            patch: PatchConfig::default(),
            l1_weight: DEFAULT_L1_WEIGHT,
        }
    }
}

impl TranslationConfig {
    pub fn unet(&self) -> UNetConfig {
        let (input_channels, output_channels) = self.direction.channels();
        UNetConfig {
            input_channels,
            output_channels,
            depth: self.unet_depth,
            base_channels: self.base_channels,
            resolution: self.resolution,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranslationModel {
    pub direction: Direction,
    pub l1_weight: f64,
    pub generator: UNet,
    pub discriminator: PatchGan,
    pub g_params: ParamStore<f32>,
    pub d_params: ParamStore<f32>,
    pub g_optimizer: Optimizer,
    pub d_optimizer: Optimizer,
}

impl TranslationModel {
    pub fn new(config: &TranslationConfig, rng: &mut Rng) -> Result<Self> {
        if !(config.l1_weight >= 0.0) {
            return Err(Error::Config(format!("l1_weight must be non-negative, got {}", config.l1_weight)));
        }
        let unet = config.unet();
        let mut g_params = ParamStore::new();
        let mut d_params = ParamStore::new();
        let generator = UNet::new(&mut g_params, "g", unet, rng)?;
        let discriminator = PatchGan::new(
            &mut d_params,
            "d",
            unet.input_channels,
            unet.output_channels,
            config.patch,
            rng,
        )?;
        if config.patch.grid_extent(config.resolution) == 0 {
            return Err(Error::Config(format!(
                "PatchGAN depth {} is too deep for resolution {}",
                config.patch.depth, config.resolution
            )));
        }
        Ok(Self {
            direction: config.direction,
            l1_weight: config.l1_weight,
            generator,
            discriminator,
            g_params,
            d_params,
            g_optimizer: Optimizer::default(),
            d_optimizer: Optimizer::default(),
        })
    }

    pub fn resolution(&self) -> usize {
        self.generator.config.resolution
    }

    pub fn patch_scores(&self, c: &Tensor, candidate: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let cv = g.constant(c.clone());
        let yv = g.constant(candidate.clone());
        let s = self.discriminator.forward(&mut g, &self.d_params, cv, yv)?;
        Ok(g.value(s).clone())
    }
}

/// Generator forward pass. The mapping is deterministic in the input.
pub fn translate(model: &TranslationModel, input: &Tensor) -> Result<Tensor> {
    let (cin, _) = model.direction.channels();
    if input.rank() != 4 || input.shape()[1] != cin {
        return Err(Error::Contract(format!(
            "{} expects [*, {cin}, H, W] input, got {:?}",
            model.direction,
            input.shape()
        )));
    }
    let mut g = Graph::new();
    let c = g.constant(input.clone());
    let out = model.generator.forward(&mut g, &model.g_params, c)?;
    Ok(g.value(out).clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CganLosses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub adversarial: f64,
    pub l1_term: f64,
}

/// Generator objective on a graph: adversarial term plus `l1_weight` times
/// the mean absolute error. Returns `(g_loss, adversarial, l1)`.
pub fn generator_objective<T: Scalar>(
    g: &mut Graph<T>,
    fake_scores: Var,
    fake: Var,
    target: Var,
    variant: GeneratorLoss,
    l1_weight: f64,
) -> Result<(Var, Var, Var)> {
    let adversarial = generator_loss_on_graph(g, fake_scores, variant);
    let diff = g.sub(fake, target)?;
    let abs = g.abs(diff);
    let l1 = g.mean(abs);
    let weighted = g.affine(l1, l1_weight, 0.0);
    let total = g.add(adversarial, weighted)?;
    Ok((total, adversarial, l1))
}

/// All loss terms for one `(c, y_real)` batch without updating anything.
pub fn cgan_losses(model: &TranslationModel, c: &Tensor, y_real: &Tensor, variant: GeneratorLoss) -> Result<CganLosses> {
    let mut g = Graph::new();
    let cv = g.constant(c.clone());
    let yv = g.constant(y_real.clone());
    let fake = model.generator.forward(&mut g, &model.g_params, cv)?;
    let real_scores = model.discriminator.forward(&mut g, &model.d_params, cv, yv)?;
    let fake_scores = model.discriminator.forward(&mut g, &model.d_params, cv, fake)?;
    let d_loss = discriminator_loss_on_graph(&mut g, real_scores, fake_scores)?;
    let (g_loss, adversarial, l1) = generator_objective(&mut g, fake_scores, fake, yv, variant, model.l1_weight)?;
    let read = |v: Var| g.value(v).item().map(|x| x as f64);
    Ok(CganLosses {
        d_loss: read(d_loss)?,
        g_loss: read(g_loss)?,
        adversarial: read(adversarial)?,
        l1_term: read(l1)?,
    })
}

/// Paired `(condition, target)` samples, each `[C, H, W]`.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    pairs: Vec<(Tensor, Tensor)>,
    order: Vec<usize>,
    cursor: usize,
}

impl PairedDataset {
    pub fn new(pairs: Vec<(Tensor, Tensor)>) -> Result<Self> {
        if let Some((c0, y0)) = pairs.first() {
            for (c, y) in &pairs {
                if c.shape() != c0.shape() || y.shape() != y0.shape() {
                    return Err(Error::Shape("paired samples must share shapes".into()));
                }
            }
        }
        let order = (0..pairs.len()).collect();
        Ok(Self {
            pairs,
            order,
            cursor: usize::MAX,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Tensor, Tensor)] {
        &self.pairs
    }

    /// Next batch in reshuffled-epoch order.
    pub fn next_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Result<(Tensor, Tensor)> {
        if self.pairs.is_empty() {
            return Err(Error::Config("cannot draw from an empty dataset".into()));
        }
        let mut cs = Vec::with_capacity(batch_size);
        let mut ys = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            if self.cursor >= self.order.len() {
                rng.shuffle(&mut self.order);
                self.cursor = 0;
            }
            let (c, y) = &self.pairs[self.order[self.cursor]];
            cs.push(c.clone());
            ys.push(y.clone());
            self.cursor += 1;
        }
        Ok((Tensor::stack_batch(&cs)?, Tensor::stack_batch(&ys)?))
    }

    /// All conditions and all targets stacked.
    pub fn stacked(&self) -> Result<(Tensor, Tensor)> {
        let cs: Vec<Tensor> = self.pairs.iter().map(|p| p.0.clone()).collect();
        let ys: Vec<Tensor> = self.pairs.iter().map(|p| p.1.clone()).collect();
        Ok((Tensor::stack_batch(&cs)?, Tensor::stack_batch(&ys)?))
    }
}

/// Discriminator update(s) then one generator update on a paired batch.
pub fn translation_step(
    model: &mut TranslationModel,
    c: &Tensor,
    y_real: &Tensor,
    config: &TrainConfig,
) -> Result<CganLosses> {
    let mut report = CganLosses {
        d_loss: 0.0,
        g_loss: 0.0,
        adversarial: 0.0,
        l1_term: 0.0,
    };
    for _ in 0..config.d_steps_per_g_step {
        let fake = translate(model, c)?;
        let mut g = Graph::new();
        let cv = g.constant(c.clone());
        let yv = g.constant(y_real.clone());
        let fv = g.constant(fake);
        let real_scores = model.discriminator.forward(&mut g, &model.d_params, cv, yv)?;
        let fake_scores = model.discriminator.forward(&mut g, &model.d_params, cv, fv)?;
        let loss = discriminator_loss_on_graph(&mut g, real_scores, fake_scores)?;
        report.d_loss = g.value(loss).item()? as f64;
        model.d_params.zero_grad();
        g.backward_into(loss, &mut model.d_params)?;
        model.d_optimizer.step(&mut model.d_params)?;
    }
    let mut g = Graph::new();
    let cv = g.constant(c.clone());
    let yv = g.constant(y_real.clone());
    let fake = model.generator.forward(&mut g, &model.g_params, cv)?;
    let fake_scores = model.discriminator.forward(&mut g, &model.d_params, cv, fake)?;
    let (loss, adversarial, l1) =
        generator_objective(&mut g, fake_scores, fake, yv, config.generator_loss, model.l1_weight)?;
    report.g_loss = g.value(loss).item()? as f64;
    report.adversarial = g.value(adversarial).item()? as f64;
    report.l1_term = g.value(l1).item()? as f64;
    model.g_params.zero_grad();
    g.backward_into(loss, &mut model.g_params)?;
    model.g_optimizer.step(&mut model.g_params)?;
    Ok(report)
}

/// `config.iterations` translation steps; one history row per step.
pub fn train_translation(
    model: &mut TranslationModel,
    dataset: &mut PairedDataset,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<CganLosses>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let (cin, cout) = model.direction.channels();
    let (c0, y0) = &dataset.pairs[0];
    if c0.shape().first() != Some(&cin) || y0.shape().first() != Some(&cout) {
        return Err(Error::Contract(format!(
            "{} needs ({cin}, {cout}) channel pairs, dataset has {:?} -> {:?}",
            model.direction,
            c0.shape(),
            y0.shape()
        )));
    }
    let mut history = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let (c, y) = dataset.next_batch(config.batch_size, rng)?;
        history.push(translation_step(model, &c, &y, config)?);
    }
    Ok(history)
}

/// Mean absolute error between translations of `inputs` and `targets`.
pub fn mean_l1(model: &TranslationModel, inputs: &Tensor, targets: &Tensor) -> Result<f64> {
    let out = translate(model, inputs)?;
    out.expect_same_shape(targets)?;
    let total: f64 = out
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(total / out.len() as f64)
}
