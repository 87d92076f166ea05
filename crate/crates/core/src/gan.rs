//! Adversarial training shared by the texture GAN and the translation CGAN.
//!
//! The value function is `V(D, G) = E[log D(x)] + E[log(1 - D(G(z)))]`,
//! estimated by batch means. The discriminator minimizes `-V`; the generator
//! minimizes either `E[log(1 - D(G(z)))]` (minimax) or `-E[log D(G(z))]`
//! (non-saturating). Scores are clamped to `[LOG_EPS, 1 - LOG_EPS]` before
//! every logarithm.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::param::{Optimizer, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Init, Scalar, Tensor};

pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Standard normal.
    Normal,
    /// Uniform on [-1, 1].
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub dim: usize,
    pub distribution: NoiseDistribution,
}

impl NoiseSpec {
    pub fn new(dim: usize, distribution: NoiseDistribution) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        Ok(Self { dim, distribution })
    }
}

/// Draw a `[batch, dim]` block of latent vectors.
pub fn sample_noise(spec: &NoiseSpec, batch: usize, rng: &mut Rng) -> Result<Tensor> {
    if batch == 0 {
        return Err(Error::Contract("noise batch must be at least 1".into()));
    }
    let init = match spec.distribution {
        NoiseDistribution::Normal => Init::Normal { mean: 0.0, std: 1.0 },
        NoiseDistribution::Uniform => Init::Uniform { lo: -1.0, hi: 1.0 },
    };
    Tensor::alloc(&[batch, spec.dim], init, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    Minimax,
    #[default]
    NonSaturating,
}

impl FromStr for GeneratorLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimax" => Ok(GeneratorLoss::Minimax),
            "non_saturating" | "non-saturating" => Ok(GeneratorLoss::NonSaturating),
            other => Err(Error::Config(format!("unknown generator loss variant {other:?}"))),
        }
    }
}

/// `mean(log D(x)) + mean(log(1 - D(G(z))))` on the tape.
pub fn value_on_graph<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let log_real = g.clamped_log(d_real, LOG_EPS);
    let real_term = g.mean(log_real);
    let fake_term = log_one_minus_mean(g, d_fake);
    g.add(real_term, fake_term)
}

fn log_one_minus_mean<T: Scalar>(g: &mut Graph<T>, d: Var) -> Var {
    let one_minus = g.affine(d, -1.0, 1.0);
    let logs = g.clamped_log(one_minus, LOG_EPS);
    g.mean(logs)
}

/// Discriminator loss `-V` on the tape.
pub fn discriminator_loss_on_graph<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var) -> Result<Var> {
    let v = value_on_graph(g, d_real, d_fake)?;
    Ok(g.affine(v, -1.0, 0.0))
}

/// Generator loss on the tape.
pub fn generator_loss_on_graph<T: Scalar>(g: &mut Graph<T>, d_fake: Var, variant: GeneratorLoss) -> Var {
    match variant {
        GeneratorLoss::Minimax => log_one_minus_mean(g, d_fake),
        GeneratorLoss::NonSaturating => {
            let logs = g.clamped_log(d_fake, LOG_EPS);
            let m = g.mean(logs);
            g.affine(m, -1.0, 0.0)
        }
    }
}

fn eval_scalar<T: Scalar>(f: impl FnOnce(&mut Graph<T>) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let out = f(&mut g)?;
    Ok(g.value(out).item()?.to_f64())
}

/// Value function `V` evaluated on score tensors.
pub fn gan_value<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<f64> {
    eval_scalar(|g| {
        let r = g.constant(d_real.clone());
        let f = g.constant(d_fake.clone());
        value_on_graph(g, r, f)
    })
}

pub fn discriminator_loss<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<f64> {
    eval_scalar(|g| {
        let r = g.constant(d_real.clone());
        let f = g.constant(d_fake.clone());
        discriminator_loss_on_graph(g, r, f)
    })
}

pub fn generator_loss<T: Scalar>(d_fake: &Tensor<T>, variant: GeneratorLoss) -> Result<f64> {
    eval_scalar(|g| {
        let f = g.constant(d_fake.clone());
        Ok(generator_loss_on_graph(g, f, variant))
    })
}

/// A network whose weights live in an external [`ParamStore`].
pub trait Network {
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, input: Var) -> Result<Var>;

    /// Per-sample input shape (no batch axis).
    fn input_shape(&self) -> Vec<usize>;

    /// Per-sample output shape (no batch axis).
    fn output_shape(&self) -> Vec<usize>;
}

/// Generator/discriminator pair with their weights and optimizers.
#[derive(Debug, Clone)]
pub struct GanModel<G, D> {
    pub generator: G,
    pub discriminator: D,
    pub g_params: ParamStore<f32>,
    pub d_params: ParamStore<f32>,
    pub noise: NoiseSpec,
    pub g_optimizer: Optimizer,
    pub d_optimizer: Optimizer,
}

impl<G: Network, D: Network> GanModel<G, D> {
    pub fn new(
        generator: G,
        discriminator: D,
        g_params: ParamStore<f32>,
        d_params: ParamStore<f32>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let model = Self {
            generator,
            discriminator,
            g_params,
            d_params,
            noise,
            g_optimizer: Optimizer::default(),
            d_optimizer: Optimizer::default(),
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// Generator output must be exactly what the discriminator consumes.
    pub fn check_shapes(&self) -> Result<()> {
        if self.generator.input_shape() != [self.noise.dim] {
            return Err(Error::Contract(format!(
                "generator expects input {:?}, noise has dimension {}",
                self.generator.input_shape(),
                self.noise.dim
            )));
        }
        if self.generator.output_shape() != self.discriminator.input_shape() {
            return Err(Error::Contract(format!(
                "generator emits {:?} but discriminator consumes {:?}",
                self.generator.output_shape(),
                self.discriminator.input_shape()
            )));
        }
        Ok(())
    }

    /// Generator forward pass on a `[batch, dim]` latent block.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let out = self.generator.forward(&mut g, &self.g_params, zv)?;
        Ok(g.value(out).clone())
    }

    /// Discriminator scores for a batch of images.
    pub fn score(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let out = self.discriminator.forward(&mut g, &self.d_params, x)?;
        Ok(g.value(out).clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub d_steps_per_g_step: usize,
    pub generator_loss: GeneratorLoss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            iterations: 1000,
            d_steps_per_g_step: 1,
            generator_loss: GeneratorLoss::NonSaturating,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::Config("d_steps_per_g_step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Telemetry of one alternating update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub d_loss: f64,
    pub g_loss: f64,
    pub mean_d_real: f64,
    pub mean_d_fake: f64,
}

/// `d_steps_per_g_step` discriminator updates on `real_batch` against fresh
/// fakes, then one generator update. Fakes used for the discriminator update
/// enter its graph as constants, so no gradient reaches the generator.
pub fn adversarial_step<G: Network, D: Network>(
    model: &mut GanModel<G, D>,
    real_batch: &Tensor,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<StepReport> {
    config.validate()?;
    let expected: Vec<usize> = model.discriminator.input_shape();
    if real_batch.rank() != expected.len() + 1 || real_batch.shape()[1..] != expected[..] {
        return Err(Error::Contract(format!(
            "real batch {:?} does not match discriminator input {:?}",
            real_batch.shape(),
            expected
        )));
    }
    let batch = real_batch.shape()[0];
    let mut report = StepReport {
        d_loss: 0.0,
        g_loss: 0.0,
        mean_d_real: 0.0,
        mean_d_fake: 0.0,
    };

    for _ in 0..config.d_steps_per_g_step {
        let z = sample_noise(&model.noise, batch, rng)?;
        let fake = model.generate(&z)?;
        let mut g = Graph::new();
        let real = g.constant(real_batch.clone());
        let fake = g.constant(fake);
        let d_real = model.discriminator.forward(&mut g, &model.d_params, real)?;
        let d_fake = model.discriminator.forward(&mut g, &model.d_params, fake)?;
        let loss = discriminator_loss_on_graph(&mut g, d_real, d_fake)?;
        report.d_loss = g.value(loss).item()?.to_f64();
        report.mean_d_real = g.value(d_real).mean().to_f64();
        report.mean_d_fake = g.value(d_fake).mean().to_f64();
        model.d_params.zero_grad();
        g.backward_into(loss, &mut model.d_params)?;
        model.d_optimizer.step(&mut model.d_params)?;
    }

    let z = sample_noise(&model.noise, batch, rng)?;
    let mut g = Graph::new();
    let zv = g.constant(z);
    let fake = model.generator.forward(&mut g, &model.g_params, zv)?;
    let d_fake = model.discriminator.forward(&mut g, &model.d_params, fake)?;
    let loss = generator_loss_on_graph(&mut g, d_fake, config.generator_loss);
    report.g_loss = g.value(loss).item()?.to_f64();
    model.g_params.zero_grad();
    g.backward_into(loss, &mut model.g_params)?;
    model.g_optimizer.step(&mut model.g_params)?;
    Ok(report)
}

/// Source of training batches.
pub trait BatchSource {
    /// Number of distinct samples available.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Next `batch_size` samples stacked along a leading batch axis.
    fn next_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Result<Tensor>;
}

/// In-memory samples visited in reshuffled epochs.
#[derive(Debug, Clone)]
pub struct TensorDataset {
    items: Vec<Tensor>,
    order: Vec<usize>,
    cursor: usize,
}

impl TensorDataset {
    /// Every item must have the same shape, without a batch axis.
    pub fn new(items: Vec<Tensor>) -> Result<Self> {
        if let Some(first) = items.first() {
            if items.iter().any(|t| t.shape() != first.shape()) {
                return Err(Error::Shape("dataset items differ in shape".into()));
            }
        }
        Ok(Self {
            order: Vec::new(),
            cursor: 0,
            items,
        })
    }

    pub fn items(&self) -> &[Tensor] {
        &self.items
    }
}

impl BatchSource for TensorDataset {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn next_batch(&mut self, batch_size: usize, rng: &mut Rng) -> Result<Tensor> {
        if self.items.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        let mut picked = Vec::with_capacity(batch_size);
        while picked.len() < batch_size {
            if self.cursor >= self.order.len() {
                self.order = (0..self.items.len()).collect();
                rng.shuffle(&mut self.order);
                self.cursor = 0;
            }
            picked.push(self.items[self.order[self.cursor]].clone());
            self.cursor += 1;
        }
        let mut shape = vec![batch_size];
        shape.extend_from_slice(self.items[0].shape());
        let data = picked.into_iter().flat_map(Tensor::into_data).collect();
        Tensor::from_vec(&shape, data)
    }
}

/// Hook run every `every` iterations (and after the last one) with the
/// 1-based iteration count.
pub struct Callback<'a, M> {
    pub every: usize,
    pub hook: Box<dyn FnMut(usize, &M) -> Result<()> + 'a>,
}

impl<'a, M> Callback<'a, M> {
    pub fn new(every: usize, hook: impl FnMut(usize, &M) -> Result<()> + 'a) -> Self {
        Self {
            every: every.max(1),
            hook: Box::new(hook),
        }
    }
}

/// Run `config.iterations` adversarial steps. The returned history has one
/// row per iteration.
pub fn train_gan<G: Network, D: Network>(
    model: &mut GanModel<G, D>,
    dataset: &mut dyn BatchSource,
    config: &TrainConfig,
    callbacks: &mut [Callback<'_, GanModel<G, D>>],
) -> Result<Vec<StepReport>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    let mut rng = Rng::new(config.seed);
    train_gan_with_rng(model, dataset, config, callbacks, &mut rng)
}

pub(crate) fn train_gan_with_rng<G: Network, D: Network>(
    model: &mut GanModel<G, D>,
    dataset: &mut dyn BatchSource,
    config: &TrainConfig,
    callbacks: &mut [Callback<'_, GanModel<G, D>>],
    rng: &mut Rng,
) -> Result<Vec<StepReport>> {
    let mut history = Vec::with_capacity(config.iterations);
    for it in 1..=config.iterations {
        let real = dataset.next_batch(config.batch_size, rng)?;
        history.push(adversarial_step(model, &real, config, rng)?);
        for cb in callbacks.iter_mut() {
            if it % cb.every == 0 || it == config.iterations {
                (cb.hook)(it, model)?;
            }
        }
    }
    Ok(history)
}

/// Write a loss history as CSV with a header row. Iterations are numbered
/// from `first_iteration`.
pub fn write_history_csv(history: &[StepReport], first_iteration: usize, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "iteration,d_loss,g_loss,mean_d_real,mean_d_fake")?;
    for (i, r) in history.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            first_iteration + i,
            r.d_loss,
            r.g_loss,
            r.mean_d_real,
            r.mean_d_fake
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn noise_shapes_and_support() {
        let spec = NoiseSpec::new(5, NoiseDistribution::Uniform).unwrap();
        let z = sample_noise(&spec, 8, &mut Rng::new(1)).unwrap();
        assert_eq!(z.shape(), &[8, 5]);
        assert!(z.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(z, sample_noise(&spec, 8, &mut Rng::new(1)).unwrap());
        assert!(NoiseSpec::new(0, NoiseDistribution::Normal).is_err());
        assert!(sample_noise(&spec, 0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn indifference_point() {
        let half = scores(&[0.5; 6]);
        let v = gan_value(&half, &half).unwrap();
        assert!((v + 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let d = discriminator_loss(&half, &half).unwrap();
        assert!((d - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn supremum_at_perfect_discrimination() {
        let v = gan_value(&scores(&[1.0 - LOG_EPS; 3]), &scores(&[LOG_EPS; 3])).unwrap();
        assert!(v.abs() < 1e-6);
        assert!(discriminator_loss(&scores(&[1.0; 2]), &scores(&[0.0; 2])).unwrap() < 1e-6);
    }

    #[test]
    fn value_matches_scalar_evaluation() {
        let mut rng = Rng::new(4);
        let real: Vec<f64> = (0..7).map(|_| rng.uniform(0.01, 0.99)).collect();
        let fake: Vec<f64> = (0..5).map(|_| rng.uniform(0.01, 0.99)).collect();
        let direct = real.iter().map(|p| p.ln()).sum::<f64>() / 7.0
            + fake.iter().map(|p| (1.0 - p).ln()).sum::<f64>() / 5.0;
        let v = gan_value(&scores(&real), &scores(&fake)).unwrap();
        assert!((v - direct).abs() < 1e-12);
        let d = discriminator_loss(&scores(&real), &scores(&fake)).unwrap();
        assert_eq!(d + v, 0.0);
    }

    #[test]
    fn generator_loss_variants() {
        let half = scores(&[0.5; 4]);
        let mm = generator_loss(&half, GeneratorLoss::Minimax).unwrap();
        let ns = generator_loss(&half, GeneratorLoss::NonSaturating).unwrap();
        assert!((mm + std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ns - std::f64::consts::LN_2).abs() < 1e-12);
        // Both decrease as fakes improve, so both are minimized at D(G(z)) -> 1.
        for variant in [GeneratorLoss::Minimax, GeneratorLoss::NonSaturating] {
            let mut prev = f64::INFINITY;
            for p in [0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
                let l = generator_loss(&scores(&[p]), variant).unwrap();
                assert!(l < prev);
                prev = l;
            }
        }
        assert!("hinge".parse::<GeneratorLoss>().is_err());
        assert_eq!("minimax".parse::<GeneratorLoss>().unwrap(), GeneratorLoss::Minimax);
    }

    #[test]
    fn discriminator_gradient_signs() {
        // dL/dD(x) < 0 (push real scores up), dL/dD(G(z)) > 0 (push fakes down).
        let real = scores(&[0.3, 0.6]);
        let fake = scores(&[0.4, 0.7]);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = real.clone();
            up.data_mut()[i] += h;
            let mut down = real.clone();
            down.data_mut()[i] -= h;
            let d = (discriminator_loss(&up, &fake).unwrap() - discriminator_loss(&down, &fake).unwrap()) / (2.0 * h);
            assert!(d < 0.0);
            let mut up = fake.clone();
            up.data_mut()[i] += h;
            let mut down = fake.clone();
            down.data_mut()[i] -= h;
            let d = (discriminator_loss(&real, &up).unwrap() - discriminator_loss(&real, &down).unwrap()) / (2.0 * h);
            assert!(d > 0.0);
        }
    }

    #[test]
    fn value_is_permutation_invariant() {
        let a = scores(&[0.1, 0.5, 0.8, 0.3]);
        let b = scores(&[0.3, 0.8, 0.1, 0.5]);
        let f = scores(&[0.2, 0.9]);
        assert!((gan_value(&a, &f).unwrap() - gan_value(&b, &f).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn train_config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.batch_size = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.batch_size = 1;
        c.d_steps_per_g_step = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dataset_batches_cover_epoch() {
        let items: Vec<Tensor> = (0..5).map(|i| Tensor::full(&[1, 2, 2], i as f32)).collect();
        let mut ds = TensorDataset::new(items).unwrap();
        let mut rng = Rng::new(0);
        let b = ds.next_batch(5, &mut rng).unwrap();
        assert_eq!(b.shape(), &[5, 1, 2, 2]);
        let mut firsts: Vec<f32> = b.data().chunks(4).map(|c| c[0]).collect();
        firsts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(firsts, vec![0., 1., 2., 3., 4.]);
    }

    #[test]
    fn history_csv_layout() {
        let r = StepReport { d_loss: 1.5, g_loss: 0.5, mean_d_real: 0.25, mean_d_fake: 0.75 };
        let mut out = Vec::new();
        write_history_csv(&[r, r], 1, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,d_loss,g_loss,mean_d_real,mean_d_fake");
        assert_eq!(lines[2], "2,1.5,0.5,0.25,0.75");
    }
}
