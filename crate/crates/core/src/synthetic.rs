//! Small generated image sets for smoke tests and toy training runs.

use crate::error::Result;
use crate::pix2pix::Direction;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Amplitude bound of generated images. Kept inside (-1, 1) so a tanh
/// generator can match them without saturating.
pub const AMPLITUDE: f64 = 0.8;

/// `n` RGB images `[3, size, size]`, each a linear color gradient with one
/// Gaussian blob on top, values in `[-AMPLITUDE, AMPLITUDE]`.
pub fn gradient_blob_images(n: usize, size: usize, rng: &mut Rng) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let angle = rng.uniform(0.0, std::f64::consts::TAU);
        let (dx, dy) = (angle.cos(), angle.sin());
        let base: [f64; 3] = [rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)];
        let slope: [f64; 3] = [rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)];
        let (cx, cy) = (rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8));
        let radius = rng.uniform(0.1, 0.25);
        let blob: [f64; 3] = [rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)];
        let mut data = vec![0.0f32; 3 * size * size];
        for c in 0..3 {
            for i in 0..size {
                for j in 0..size {
                    let (x, y) = ((j as f64 + 0.5) / size as f64, (i as f64 + 0.5) / size as f64);
                    let t = (x - 0.5) * dx + (y - 0.5) * dy;
                    let r2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (radius * radius);
                    let v = base[c] + slope[c] * t * 2.0 + blob[c] * (-r2).exp();
                    data[(c * size + i) * size + j] = v.clamp(-AMPLITUDE, AMPLITUDE) as f32;
                }
            }
        }
        out.push(Tensor::from_vec(&[3, size, size], data)?);
    }
    Ok(out)
}

/// Rec. 601 luma of an RGB value.
pub fn luminance(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Per-pixel luminance of a `[3, H, W]` image as `[1, H, W]`.
pub fn luminance_image(rgb: &Tensor) -> Result<Tensor> {
    let shape = rgb.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(crate::Error::Shape(format!("expected [3, H, W], got {shape:?}")));
    }
    let plane = shape[1] * shape[2];
    let d = rgb.data();
    let data = (0..plane)
        .map(|k| luminance(d[k], d[plane + k], d[2 * plane + k]))
        .collect();
    Tensor::from_vec(&[1, shape[1], shape[2]], data)
}

/// `(rgb, luminance)` pairs `([3, S, S], [1, S, S])` built from smooth
/// gradient/blob images.
pub fn luminance_pairs(n: usize, size: usize, rng: &mut Rng) -> Result<Vec<(Tensor, Tensor)>> {
    gradient_blob_images(n, size, rng)?
        .into_iter()
        .map(|rgb| {
            let y = luminance_image(&rgb)?;
            Ok((rgb, y))
        })
        .collect()
}

/// A one-channel `[1, H, W]` image repeated into three equal channels.
pub fn gray_rgb(height: &Tensor) -> Result<Tensor> {
    let shape = height.shape();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(crate::Error::Shape(format!("expected [1, H, W], got {shape:?}")));
    }
    let d = height.data();
    let data = d.iter().chain(d).chain(d).copied().collect();
    Tensor::from_vec(&[3, shape[1], shape[2]], data)
}

/// Toy translation pairs for `direction`: RGB to its luminance, or a
/// luminance height map to the matching gray RGB image.
pub fn toy_translation_pairs(direction: Direction, n: usize, size: usize, rng: &mut Rng) -> Result<Vec<(Tensor, Tensor)>> {
    let pairs = luminance_pairs(n, size, rng)?;
    match direction {
        Direction::RgbToDem => Ok(pairs),
        Direction::DemToRgb => pairs
            .into_iter()
            .map(|(_, y)| {
                let rgb = gray_rgb(&y)?;
                Ok((y, rgb))
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_are_bounded_and_distinct() {
        let imgs = gradient_blob_images(4, 16, &mut Rng::new(3)).unwrap();
        assert_eq!(imgs.len(), 4);
        for img in &imgs {
            assert_eq!(img.shape(), &[3, 16, 16]);
            let (lo, hi) = img.min_max();
            assert!(lo >= -AMPLITUDE as f32 && hi <= AMPLITUDE as f32);
        }
        assert_ne!(imgs[0], imgs[1]);
        assert_eq!(imgs, gradient_blob_images(4, 16, &mut Rng::new(3)).unwrap());
    }

    #[test]
    fn luminance_of_gray_is_gray() {
        let rgb = Tensor::full(&[3, 2, 2], 0.5f32);
        let y = luminance_image(&rgb).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn inverse_pairs_are_gray() {
        let pairs = toy_translation_pairs(Direction::DemToRgb, 2, 4, &mut Rng::new(1)).unwrap();
        let (h, rgb) = &pairs[0];
        assert_eq!((h.shape(), rgb.shape()), (&[1, 4, 4][..], &[3, 4, 4][..]));
        assert_eq!(&rgb.data()[32..], h.data());
        let forward = toy_translation_pairs(Direction::RgbToDem, 2, 4, &mut Rng::new(1)).unwrap();
        assert_eq!(&forward[0].1, h);
    }
}
