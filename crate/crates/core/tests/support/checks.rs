// Experiment drivers shared by the integration tests and the acceptance
// suite (included through `#[path]`).
#![allow(dead_code)]

use std::time::{Duration, Instant};

use terragan::gan::{TensorDataset, TrainConfig};
use terragan::pix2pix::{mean_l1, train_translation, Direction, PairedDataset, TranslationConfig, TranslationModel};
use terragan::progan::{make_schedule, train_progressive, ProGanConfig};
use terragan::synthetic::{gradient_blob_images, toy_translation_pairs};
use terragan::{Rng, Tensor};

#[derive(Debug, Default)]
pub struct Locality {
    /// Score cells outside the receptive field whose bits changed.
    pub violations: usize,
    /// Score cells inside the receptive field that changed.
    pub changed_inside: usize,
    pub probes: usize,
}

/// Perturb single input pixels (of the condition and of the candidate) and
/// compare every patch score bit for bit.
pub fn patch_locality(model: &TranslationModel, pixels: &[(usize, usize)], seed: u64) -> Locality {
    let res = model.resolution();
    let (cin, cout) = model.direction.channels();
    let mut rng = Rng::new(seed);
    let mut noise = |c: usize| {
        let data = (0..c * res * res).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        Tensor::from_vec(&[1, c, res, res], data).unwrap()
    };
    let (c, y) = (noise(cin), noise(cout));
    let base = model.patch_scores(&c, &y).unwrap();
    let rf = model.discriminator.config().receptive_field();
    let grid = base.shape()[3];
    let mut out = Locality::default();
    for &(i, j) in pixels {
        for which in 0..2 {
            let (mut c2, mut y2) = (c.clone(), y.clone());
            let target = if which == 0 { &mut c2 } else { &mut y2 };
            target.data_mut()[i * res + j] += 0.5;
            let scores = model.patch_scores(&c2, &y2).unwrap();
            for p in 0..grid {
                for q in 0..grid {
                    let k = p * grid + q;
                    let changed = scores.data()[k].to_bits() != base.data()[k].to_bits();
                    if rf.covers(p, i) && rf.covers(q, j) {
                        out.changed_inside += changed as usize;
                    } else {
                        out.violations += changed as usize;
                    }
                }
            }
            out.probes += 1;
        }
    }
    out
}

#[derive(Debug)]
pub struct ProGanToy {
    pub mean_d_real: f64,
    pub mean_d_fake: f64,
    pub max_abs_pixel: f32,
    pub elapsed: Duration,
}

/// Schedule [4, 8, 16] on 16 synthetic 16x16 images at batch 8. Final
/// discriminator scores are averaged over the last `window` steps.
pub fn progan_toy(iterations_per_stage: usize, window: usize) -> ProGanToy {
    let start = Instant::now();
    let images = gradient_blob_images(16, 16, &mut Rng::new(11)).unwrap();
    let mut data = TensorDataset::new(images).unwrap();
    let schedule = make_schedule(16, iterations_per_stage, 0.5).unwrap();
    let train = TrainConfig {
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (model, stages) = train_progressive(
        &schedule,
        &mut data,
        &ProGanConfig::default(),
        &train,
        &mut Rng::new(1),
        &mut |_, _| Ok(()),
    )
    .unwrap();
    let last = &stages.last().unwrap().history;
    let tail = &last[last.len() - window.min(last.len())..];
    let n = tail.len() as f64;
    let z = terragan::gan::sample_noise(&model.noise, 64, &mut Rng::new(99)).unwrap();
    let samples = model.generate(&z).unwrap();
    ProGanToy {
        mean_d_real: tail.iter().map(|r| r.mean_d_real).sum::<f64>() / n,
        mean_d_fake: tail.iter().map(|r| r.mean_d_fake).sum::<f64>() / n,
        max_abs_pixel: samples.data().iter().fold(0.0f32, |m, v| m.max(v.abs())),
        elapsed: start.elapsed(),
    }
}

#[derive(Debug)]
pub struct TranslationToy {
    pub held_out_l1: f64,
    pub elapsed: Duration,
    pub model: TranslationModel,
}

/// 64 training and 16 held-out 32x32 pairs, lambda 100, batch 8.
pub fn translation_toy(direction: Direction, iterations: usize) -> TranslationToy {
    let start = Instant::now();
    let mut pairs = toy_translation_pairs(direction, 80, 32, &mut Rng::new(21)).unwrap();
    let held = pairs.split_off(64);
    let mut train = PairedDataset::new(pairs).unwrap();
    let (hc, hy) = PairedDataset::new(held).unwrap().stacked().unwrap();
    let config = TranslationConfig {
        direction,
        l1_weight: 100.0,
        ..TranslationConfig::default()
    };
    let mut model = TranslationModel::new(&config, &mut Rng::new(3)).unwrap();
    let tc = TrainConfig {
        batch_size: 8,
        iterations,
        ..TrainConfig::default()
    };
    train_translation(&mut model, &mut train, &tc, &mut Rng::new(4)).unwrap();
    TranslationToy {
        held_out_l1: mean_l1(&model, &hc, &hy).unwrap(),
        elapsed: start.elapsed(),
        model,
    }
}
