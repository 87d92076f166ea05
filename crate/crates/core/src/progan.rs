//! Progressive growing of the texture GAN.
//!
//! Training starts at 4x4. Each later stage doubles the resolution by adding
//! a block to the end of the generator and a mirrored block to the front of
//! the discriminator. While a new block is faded in, the generator emits
//! `(1 - alpha) * up2(previous head) + alpha * new head` and the
//! discriminator blends its new input path with the downscaled old one
//! using the same `alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::{
    self, BatchSource, Callback, GanModel, Network, NoiseDistribution, NoiseSpec, StepReport, TrainConfig,
};
use crate::graph::{Graph, Var};
use crate::nn::{Conv2dLayer, ConvTranspose2dLayer};
use crate::ops;
use crate::param::ParamStore;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

pub const BASE_RESOLUTION: usize = 4;
pub const MAX_RESOLUTION: usize = 256;
const SLOPE: f64 = 0.2;
const IMAGE_CHANNELS: usize = 3;

/// Resolution ladder with its per-stage iteration budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub resolutions: Vec<usize>,
    pub iterations_per_stage: usize,
    pub fade_fraction: f64,
}

/// Ladder 4, 8, ..., `target_resolution`.
pub fn make_schedule(target_resolution: usize, iterations_per_stage: usize, fade_fraction: f64) -> Result<StageSchedule> {
    if !target_resolution.is_power_of_two() || !(BASE_RESOLUTION..=MAX_RESOLUTION).contains(&target_resolution) {
        return Err(Error::Config(format!(
            "target resolution must be a power of two in [4, 256], got {target_resolution}"
        )));
    }
    if !(fade_fraction > 0.0 && fade_fraction < 1.0) {
        return Err(Error::Config(format!("fade_fraction must lie in (0,1), got {fade_fraction}")));
    }
    let mut resolutions = vec![BASE_RESOLUTION];
    while *resolutions.last().unwrap() < target_resolution {
        resolutions.push(resolutions.last().unwrap() * 2);
    }
    Ok(StageSchedule {
        resolutions,
        iterations_per_stage,
        fade_fraction,
    })
}

impl StageSchedule {
    pub fn stages(&self) -> usize {
        self.resolutions.len()
    }

    pub fn final_resolution(&self) -> usize {
        *self.resolutions.last().expect("schedule is never empty")
    }

    /// Iterations spent fading in a new block (stages after the first).
    pub fn fade_iterations(&self) -> usize {
        ((self.iterations_per_stage as f64 * self.fade_fraction).round() as usize).max(1)
    }
}

/// Linear ramp `min(iteration / fade_iterations, 1)`.
pub fn alpha_schedule(iteration: usize, fade_iterations: usize) -> f64 {
    if fade_iterations == 0 {
        return 1.0;
    }
    (iteration as f64 / fade_iterations as f64).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadeState {
    pub alpha: f64,
    pub stage_index: usize,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha must lie in [0,1], got {alpha}")));
    }
    Ok(())
}

/// Widths of the desk-scale ladder: `base` channels at 4x4, halved per
/// doubling, never below `min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub base: usize,
    pub min: usize,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self { base: 32, min: 8 }
    }
}

impl ChannelPlan {
    pub fn at(&self, stage: usize) -> usize {
        (self.base >> stage.min(31)).max(self.min)
    }
}

/// Two 3x3 convolutions of a growth block.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Block {
    first: Conv2dLayer,
    second: Conv2dLayer,
}

impl Block {
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.first.forward(g, params, x)?;
        let h = g.leaky_relu(h, SLOPE)?;
        let h = self.second.forward(g, params, h)?;
        g.leaky_relu(h, SLOPE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagedGenerator {
    latent_dim: usize,
    channels: ChannelPlan,
    max_stage: usize,
    stage: usize,
    alpha: f64,
    latent: ConvTranspose2dLayer,
    base: Conv2dLayer,
    blocks: Vec<Block>,
    to_rgb: Vec<Conv2dLayer>,
}

impl StagedGenerator {
    pub fn new(
        store: &mut ParamStore<f32>,
        latent_dim: usize,
        channels: ChannelPlan,
        max_stage: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c0 = channels.at(0);
        let latent = ConvTranspose2dLayer::create(store, "g.latent", latent_dim, c0, 4, 1, 0, rng)?;
        let base = Conv2dLayer::create(store, "g.base", c0, c0, 3, 1, 1, rng)?;
        let to_rgb = vec![Conv2dLayer::create(store, "g.to_rgb0", c0, IMAGE_CHANNELS, 1, 1, 0, rng)?];
        Ok(Self {
            latent_dim,
            channels,
            max_stage,
            stage: 0,
            alpha: 1.0,
            latent,
            base,
            blocks: Vec::new(),
            to_rgb,
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn resolution(&self) -> usize {
        BASE_RESOLUTION << self.stage
    }

    fn grow(&mut self, store: &mut ParamStore<f32>, rng: &mut Rng) -> Result<()> {
        let s = self.stage + 1;
        let (cin, cout) = (self.channels.at(s - 1), self.channels.at(s));
        self.blocks.push(Block {
            first: Conv2dLayer::create(store, &format!("g.block{s}.conv1"), cin, cout, 3, 1, 1, rng)?,
            second: Conv2dLayer::create(store, &format!("g.block{s}.conv2"), cout, cout, 3, 1, 1, rng)?,
        });
        self.to_rgb.push(Conv2dLayer::create(
            store,
            &format!("g.to_rgb{s}"),
            cout,
            IMAGE_CHANNELS,
            1,
            1,
            0,
            rng,
        )?);
        self.stage = s;
        self.alpha = 0.0;
        Ok(())
    }

    fn head<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, stage: usize, h: Var) -> Result<Var> {
        let rgb = self.to_rgb[stage].forward(g, params, h)?;
        Ok(g.tanh(rgb))
    }

    fn forward_with_alpha<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &ParamStore<T>,
        z: Var,
        alpha: f64,
    ) -> Result<Var> {
        let batch = g.value(z).shape()[0];
        let z4 = g.reshape(z, &[batch, self.latent_dim, 1, 1])?;
        let h = self.latent.forward(g, params, z4)?;
        let h = g.leaky_relu(h, SLOPE)?;
        let h = self.base.forward(g, params, h)?;
        let mut h = g.leaky_relu(h, SLOPE)?;
        let mut previous = h;
        for block in &self.blocks {
            previous = h;
            let up = g.up2(h)?;
            h = block.forward(g, params, up)?;
        }
        let new_image = self.head(g, params, self.stage, h)?;
        if self.stage == 0 || alpha >= 1.0 {
            return Ok(new_image);
        }
        let old_image = self.head(g, params, self.stage - 1, previous)?;
        let old_up = g.up2(old_image)?;
        let old_part = g.affine(old_up, 1.0 - alpha, 0.0);
        let new_part = g.affine(new_image, alpha, 0.0);
        g.add(old_part, new_part)
    }

    /// Output at an explicit fade coefficient. Requires a previous-stage
    /// head, i.e. at least one growth step.
    pub fn faded_forward<T: Scalar>(&self, params: &ParamStore<T>, z: &Tensor<T>, alpha: f64) -> Result<Tensor<T>> {
        check_alpha(alpha)?;
        if self.stage == 0 {
            return Err(Error::Contract("faded_forward needs a grown generator".into()));
        }
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let out = self.forward_with_alpha(&mut g, params, zv, alpha)?;
        Ok(g.value(out).clone())
    }

    /// The two heads being blended: `(up2(previous head), new head)`.
    pub fn heads<T: Scalar>(&self, params: &ParamStore<T>, z: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((self.faded_forward(params, z, 0.0)?, self.faded_forward(params, z, 1.0)?))
    }
}

impl Network for StagedGenerator {
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, input: Var) -> Result<Var> {
        self.forward_with_alpha(g, params, input, self.alpha)
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![self.latent_dim]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![IMAGE_CHANNELS, self.resolution(), self.resolution()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagedDiscriminator {
    channels: ChannelPlan,
    stage: usize,
    alpha: f64,
    from_rgb: Vec<Conv2dLayer>,
    blocks: Vec<Block>,
    base: Conv2dLayer,
    out: Conv2dLayer,
}

impl StagedDiscriminator {
    pub fn new(store: &mut ParamStore<f32>, channels: ChannelPlan, rng: &mut Rng) -> Result<Self> {
        let c0 = channels.at(0);
        Ok(Self {
            channels,
            stage: 0,
            alpha: 1.0,
            from_rgb: vec![Conv2dLayer::create(store, "d.from_rgb0", IMAGE_CHANNELS, c0, 1, 1, 0, rng)?],
            blocks: Vec::new(),
            base: Conv2dLayer::create(store, "d.base", c0, c0, 3, 1, 1, rng)?,
            out: Conv2dLayer::create(store, "d.out", c0, 1, 4, 1, 0, rng)?,
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn resolution(&self) -> usize {
        BASE_RESOLUTION << self.stage
    }

    fn grow(&mut self, store: &mut ParamStore<f32>, rng: &mut Rng) -> Result<()> {
        let s = self.stage + 1;
        let (cin, cout) = (self.channels.at(s), self.channels.at(s - 1));
        self.from_rgb.push(Conv2dLayer::create(
            store,
            &format!("d.from_rgb{s}"),
            IMAGE_CHANNELS,
            cin,
            1,
            1,
            0,
            rng,
        )?);
        self.blocks.push(Block {
            first: Conv2dLayer::create(store, &format!("d.block{s}.conv1"), cin, cin, 3, 1, 1, rng)?,
            second: Conv2dLayer::create(store, &format!("d.block{s}.conv2"), cin, cout, 3, 1, 1, rng)?,
        });
        self.stage = s;
        self.alpha = 0.0;
        Ok(())
    }

    fn from_rgb<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, stage: usize, x: Var) -> Result<Var> {
        let h = self.from_rgb[stage].forward(g, params, x)?;
        g.leaky_relu(h, SLOPE)
    }

    fn forward_with_alpha<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &ParamStore<T>,
        x: Var,
        alpha: f64,
    ) -> Result<Var> {
        let res = self.resolution();
        let [batch, c, h, w] = g.value(x).dims4()?;
        if (c, h, w) != (IMAGE_CHANNELS, res, res) {
            return Err(Error::Shape(format!(
                "discriminator at stage {} expects [*, 3, {res}, {res}], got {:?}",
                self.stage,
                g.value(x).shape()
            )));
        }
        let mut h = self.from_rgb(g, params, self.stage, x)?;
        if self.stage > 0 {
            let block = &self.blocks[self.stage - 1];
            h = block.forward(g, params, h)?;
            h = g.down2(h)?;
            if alpha < 1.0 {
                let small = g.down2(x)?;
                let skip = self.from_rgb(g, params, self.stage - 1, small)?;
                let new_part = g.affine(h, alpha, 0.0);
                let old_part = g.affine(skip, 1.0 - alpha, 0.0);
                h = g.add(new_part, old_part)?;
            }
            for block in self.blocks[..self.stage - 1].iter().rev() {
                h = block.forward(g, params, h)?;
                h = g.down2(h)?;
            }
        }
        let h = self.base.forward(g, params, h)?;
        let h = g.leaky_relu(h, SLOPE)?;
        let logits = self.out.forward(g, params, h)?;
        let flat = g.reshape(logits, &[batch])?;
        Ok(g.sigmoid(flat))
    }
}

impl Network for StagedDiscriminator {
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, input: Var) -> Result<Var> {
        self.forward_with_alpha(g, params, input, self.alpha)
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![IMAGE_CHANNELS, self.resolution(), self.resolution()]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![]
    }
}

pub type ProGan = GanModel<StagedGenerator, StagedDiscriminator>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProGanConfig {
    pub latent_dim: usize,
    pub noise: NoiseDistribution,
    pub channels: ChannelPlan,
    pub target_resolution: usize,
}

impl Default for ProGanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            noise: NoiseDistribution::Normal,
            channels: ChannelPlan::default(),
            target_resolution: 32,
        }
    }
}

/// Fresh stage-0 model. Weights are drawn from `rng`.
pub fn new_progan(config: &ProGanConfig, rng: &mut Rng) -> Result<ProGan> {
    let schedule = make_schedule(config.target_resolution, 1, 0.5)?;
    let mut g_params = ParamStore::new();
    let mut d_params = ParamStore::new();
    let generator = StagedGenerator::new(
        &mut g_params,
        config.latent_dim,
        config.channels,
        schedule.stages() - 1,
        rng,
    )?;
    let discriminator = StagedDiscriminator::new(&mut d_params, config.channels, rng)?;
    GanModel::new(
        generator,
        discriminator,
        g_params,
        d_params,
        NoiseSpec::new(config.latent_dim, config.noise)?,
    )
}

/// Advance both networks to the next resolution, resetting alpha to 0.
pub fn grow(model: &mut ProGan, rng: &mut Rng) -> Result<()> {
    if model.generator.stage >= model.generator.max_stage {
        return Err(Error::State(format!(
            "already at the final resolution {}",
            model.generator.resolution()
        )));
    }
    model.generator.grow(&mut model.g_params, rng)?;
    model.discriminator.grow(&mut model.d_params, rng)?;
    model.check_shapes()
}

pub fn set_alpha(model: &mut ProGan, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    model.generator.alpha = alpha;
    model.discriminator.alpha = alpha;
    Ok(())
}

pub fn fade_state(model: &ProGan) -> FadeState {
    FadeState {
        alpha: model.generator.alpha,
        stage_index: model.generator.stage,
    }
}

/// Downscale `[B, 3, S, S]` tiles to `resolution` by repeated 2x2 block
/// averaging.
pub fn real_batch_at_resolution(tiles: &Tensor, resolution: usize) -> Result<Tensor> {
    let [_, _, h, w] = tiles.dims4()?;
    if h != w || !h.is_power_of_two() || !resolution.is_power_of_two() {
        return Err(Error::Contract(format!(
            "tiles {h}x{w} and resolution {resolution} must be square powers of two"
        )));
    }
    if resolution > h {
        return Err(Error::Contract(format!(
            "cannot upscale {h}x{h} tiles to {resolution}"
        )));
    }
    let mut out = tiles.clone();
    let mut size = h;
    while size > resolution {
        out = ops::down2_average(&out)?;
        size /= 2;
    }
    Ok(out)
}

/// Batches drawn from full-size tiles, downscaled to the active resolution
/// and, mid-fade, blended with their blocky lower-resolution counterpart the
/// same way generator outputs are.
struct StageView<'a> {
    inner: &'a mut dyn BatchSource,
    resolution: usize,
    alpha: f64,
}

impl BatchSource for StageView<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn next_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Result<Tensor> {
        let tiles = self.inner.next_batch(batch_size, rng)?;
        let real = real_batch_at_resolution(&tiles, self.resolution)?;
        if self.alpha >= 1.0 || self.resolution == BASE_RESOLUTION {
            return Ok(real);
        }
        let coarse = ops::up2_nearest(&ops::down2_average(&real)?)?;
        let a = self.alpha as f32;
        real.zip_map(&coarse, |fine, blocky| (1.0 - a) * blocky + a * fine)
    }
}

/// Loss history of one resolution stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHistory {
    pub resolution: usize,
    pub fade_iterations: usize,
    pub history: Vec<StepReport>,
}

/// Train through every stage of `schedule`. Stage 0 trains for the full
/// budget; each later stage first grows the model, fades the new block in
/// over `schedule.fade_iterations()` steps and then trains at alpha 1 for
/// the rest of the budget. `on_stage_end` runs after every stage.
pub fn train_progressive(
    schedule: &StageSchedule,
    dataset: &mut dyn BatchSource,
    model_config: &ProGanConfig,
    train: &TrainConfig,
    rng: &mut Rng,
    on_stage_end: &mut dyn FnMut(usize, &ProGan) -> Result<()>,
) -> Result<(ProGan, Vec<StageHistory>)> {
    train.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let config = ProGanConfig {
        target_resolution: schedule.final_resolution(),
        ..*model_config
    };
    let mut init_rng = rng.derive(0x1417);
    let mut model = new_progan(&config, &mut init_rng)?;
    let mut histories = Vec::with_capacity(schedule.stages());
    let total = schedule.iterations_per_stage;
    for (stage, &resolution) in schedule.resolutions.iter().enumerate() {
        let mut history = Vec::with_capacity(total);
        let mut fade_iterations = 0;
        if stage > 0 {
            grow(&mut model, &mut init_rng)?;
            fade_iterations = schedule.fade_iterations().min(total);
            for i in 0..fade_iterations {
                let alpha = alpha_schedule(i, fade_iterations);
                set_alpha(&mut model, alpha)?;
                let mut view = StageView {
                    inner: &mut *dataset,
                    resolution,
                    alpha,
                };
                let real = view.next_batch(train.batch_size, rng)?;
                history.push(gan::adversarial_step(&mut model, &real, train, rng)?);
            }
        }
        set_alpha(&mut model, 1.0)?;
        let stable = TrainConfig {
            iterations: total - fade_iterations,
            ..*train
        };
        let mut view = StageView {
            inner: &mut *dataset,
            resolution,
            alpha: 1.0,
        };
        let mut no_callbacks: [Callback<'_, ProGan>; 0] = [];
        history.extend(gan::train_gan_with_rng(&mut model, &mut view, &stable, &mut no_callbacks, rng)?);
        on_stage_end(stage, &model)?;
        histories.push(StageHistory {
            resolution,
            fade_iterations,
            history,
        });
    }
    Ok((model, histories))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::sample_noise;

    fn model(target: usize, seed: u64) -> ProGan {
        let config = ProGanConfig {
            latent_dim: 8,
            target_resolution: target,
            ..Default::default()
        };
        new_progan(&config, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn schedules() {
        assert_eq!(make_schedule(256, 10, 0.5).unwrap().resolutions, vec![4, 8, 16, 32, 64, 128, 256]);
        assert_eq!(make_schedule(4, 10, 0.5).unwrap().resolutions, vec![4]);
        assert_eq!(make_schedule(16, 10, 0.5).unwrap().resolutions, vec![4, 8, 16]);
        assert!(matches!(make_schedule(24, 10, 0.5), Err(Error::Config(_))));
        assert!(make_schedule(512, 10, 0.5).is_err());
        assert!(make_schedule(2, 10, 0.5).is_err());
        assert!(make_schedule(16, 10, 1.0).is_err());
        assert_eq!(make_schedule(16, 10, 0.5).unwrap().fade_iterations(), 5);
    }

    #[test]
    fn alpha_ramp() {
        assert_eq!(alpha_schedule(0, 10), 0.0);
        assert_eq!(alpha_schedule(5, 10), 0.5);
        assert_eq!(alpha_schedule(10, 10), 1.0);
        assert_eq!(alpha_schedule(25, 10), 1.0);
    }

    #[test]
    fn channel_plan_halves_with_floor() {
        let plan = ChannelPlan::default();
        let widths: Vec<usize> = (0..7).map(|s| plan.at(s)).collect();
        assert_eq!(widths, vec![32, 16, 8, 8, 8, 8, 8]);
    }

    #[test]
    fn growth_preserves_parameters_and_doubles_output() {
        let mut m = model(16, 1);
        let before_g = m.g_params.clone();
        let before_d = m.d_params.clone();
        let z = sample_noise(&m.noise, 2, &mut Rng::new(5)).unwrap();
        assert_eq!(m.generate(&z).unwrap().shape(), &[2, 3, 4, 4]);
        grow(&mut m, &mut Rng::new(2)).unwrap();
        assert!(m.g_params.element_count() > before_g.element_count());
        assert!(m.d_params.element_count() > before_d.element_count());
        for p in before_g.iter() {
            assert_eq!(m.g_params.get(p.name()).unwrap().value(), p.value());
        }
        for p in before_d.iter() {
            assert_eq!(m.d_params.get(p.name()).unwrap().value(), p.value());
        }
        let img = m.generate(&z).unwrap();
        assert_eq!(img.shape(), &[2, 3, 8, 8]);
        assert_eq!(m.score(&img).unwrap().shape(), &[2]);
        assert_eq!(fade_state(&m), FadeState { alpha: 0.0, stage_index: 1 });
    }

    #[test]
    fn growth_past_final_stage_fails() {
        let mut m = model(8, 1);
        grow(&mut m, &mut Rng::new(0)).unwrap();
        assert!(matches!(grow(&mut m, &mut Rng::new(0)), Err(Error::State(_))));
    }

    #[test]
    fn fade_endpoints_and_midpoints() {
        let mut m = model(8, 3);
        let z = sample_noise(&m.noise, 1, &mut Rng::new(9)).unwrap();
        let before = m.generate(&z).unwrap();
        grow(&mut m, &mut Rng::new(4)).unwrap();
        let g = &m.generator;
        let at0 = g.faded_forward(&m.g_params, &z, 0.0).unwrap();
        assert_eq!(at0, ops::up2_nearest(&before).unwrap());
        let (old, new) = g.heads(&m.g_params, &z).unwrap();
        let quarter = g.faded_forward(&m.g_params, &z, 0.25).unwrap();
        for ((&q, &o), &n) in quarter.data().iter().zip(old.data()).zip(new.data()) {
            assert!((q - (0.75 * o + 0.25 * n)).abs() < 1e-6);
        }
        assert!(g.faded_forward(&m.g_params, &z, 1.5).is_err());
        assert!(model(8, 0).generator.faded_forward(&m.g_params, &z, 0.5).is_err());
    }

    #[test]
    fn real_batch_downscaling() {
        let tiles = Tensor::full(&[2, 3, 16, 16], 0.3f32);
        assert_eq!(real_batch_at_resolution(&tiles, 16).unwrap(), tiles);
        let small = real_batch_at_resolution(&tiles, 4).unwrap();
        assert_eq!(small.shape(), &[2, 3, 4, 4]);
        assert!(small.data().iter().all(|&v| (v - 0.3).abs() < 1e-7));
        let checker: Vec<f32> = (0..64).map(|i| if (i / 8 + i % 8) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let checker = Tensor::from_vec(&[1, 1, 8, 8], checker).unwrap();
        let down = real_batch_at_resolution(&checker, 4).unwrap();
        assert!(down.data().iter().all(|&v| v == 0.0));
        assert!(matches!(real_batch_at_resolution(&tiles, 32), Err(Error::Contract(_))));
    }

    #[test]
    fn discriminator_rejects_wrong_resolution() {
        let m = model(8, 1);
        assert!(m.score(&Tensor::zeros(&[1, 3, 8, 8])).is_err());
    }
}
