//! Classic 2D gradient noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::HeightField;

/// Eight unit gradients at multiples of 45 degrees.
const GRADIENTS: [(f64, f64); 8] = {
    const D: f64 = std::f64::consts::FRAC_1_SQRT_2;
    [
        (1.0, 0.0),
        (D, D),
        (0.0, 1.0),
        (-D, D),
        (-1.0, 0.0),
        (-D, -D),
        (0.0, -1.0),
        (D, -D),
    ]
};

/// Seeded Perlin noise with a 256-entry permutation table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Perlin {
    perm: [u8; 256],
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

impl Perlin {
    pub fn new(seed: u64) -> Self {
        let mut table: Vec<u8> = (0..=255).collect();
        Rng::new(seed).derive(0x9e71).shuffle(&mut table);
        let mut perm = [0u8; 256];
        perm.copy_from_slice(&table);
        Self { perm }
    }

    fn gradient(&self, ix: i64, iy: i64) -> (f64, f64) {
        let h = self.perm[(self.perm[(ix & 255) as usize] as i64 + iy).rem_euclid(256) as usize];
        GRADIENTS[(h & 7) as usize]
    }

    /// Noise at `(x, y)`. Exactly zero at integer coordinates; bounded by
    /// `sqrt(2)/2` in magnitude.
    pub fn noise(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (ix, iy) = (x0 as i64, y0 as i64);
        let corner = |dx: i64, dy: i64| {
            let (gx, gy) = self.gradient(ix + dx, iy + dy);
            gx * (fx - dx as f64) + gy * (fy - dy as f64)
        };
        let (u, v) = (fade(fx), fade(fy));
        let bottom = lerp(corner(0, 0), corner(1, 0), u);
        let top = lerp(corner(0, 1), corner(1, 1), u);
        lerp(bottom, top, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerlinParams {
    pub seed: u64,
    /// Lattice cells per tile edge for the first octave.
    pub base_frequency: f64,
    pub octaves: usize,
    pub persistence: f64,
    pub lacunarity: f64,
}

impl Default for PerlinParams {
    fn default() -> Self {
        Self {
            seed: 0,
            base_frequency: 4.0,
            octaves: 4,
            persistence: 0.5,
            lacunarity: 2.0,
        }
    }
}

impl PerlinParams {
    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 {
            return Err(Error::Config("octaves must be at least 1".into()));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(Error::Config(format!("persistence must lie in (0,1], got {}", self.persistence)));
        }
        if !(self.lacunarity >= 1.0) || !(self.base_frequency > 0.0) {
            return Err(Error::Config("lacunarity must be >= 1 and base_frequency positive".into()));
        }
        Ok(())
    }

    /// Sum of octave amplitudes `persistence^k`, the divisor that keeps the
    /// octave sum inside the single-octave bound.
    pub fn amplitude_sum(&self) -> f64 {
        (0..self.octaves).map(|k| self.persistence.powi(k as i32)).sum()
    }
}

/// Multi-octave field sampled at the pixel grid `x = j * f / N`,
/// `y = i * f / N`, normalized by the amplitude sum and clamped to [-1, 1].
pub fn perlin_heightfield(size: usize, params: &PerlinParams) -> Result<HeightField> {
    if size < 2 {
        return Err(Error::Contract(format!("height field needs N >= 2, got {size}")));
    }
    params.validate()?;
    let noise = Perlin::new(params.seed);
    let norm = params.amplitude_sum();
    let mut data = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let mut total = 0.0;
            let mut amplitude = 1.0;
            let mut frequency = params.base_frequency;
            for _ in 0..params.octaves {
                let x = j as f64 * frequency / size as f64;
                let y = i as f64 * frequency / size as f64;
                total += amplitude * noise.noise(x, y);
                amplitude *= params.persistence;
                frequency *= params.lacunarity;
            }
            data.push((total / norm).clamp(-1.0, 1.0) as f32);
        }
    }
    HeightField::new(Tensor::from_vec(&[size, size], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_on_lattice() {
        let p = Perlin::new(3);
        for x in -5..5 {
            for y in -5..5 {
                assert_eq!(p.noise(x as f64, y as f64), 0.0);
            }
        }
    }

    #[test]
    fn gradients_are_unit() {
        for (x, y) in GRADIENTS {
            assert!(((x * x + y * y) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_center_bound_is_reached_by_diagonals() {
        // every corner gradient pointing at the center gives sqrt(2)/2
        let d = std::f64::consts::FRAC_1_SQRT_2;
        let corners = [(d, d), (-d, d), (d, -d), (-d, -d)];
        let offsets = [(0.5, 0.5), (-0.5, 0.5), (0.5, -0.5), (-0.5, -0.5)];
        let v: f64 = corners.iter().zip(offsets).map(|(g, o)| g.0 * o.0 + g.1 * o.1).sum::<f64>() / 4.0;
        assert!((v - d).abs() < 1e-15);
    }

    #[test]
    fn heightfield_is_deterministic_and_bounded() {
        let params = PerlinParams {
            seed: 11,
            ..Default::default()
        };
        let a = perlin_heightfield(32, &params).unwrap();
        assert_eq!(a, perlin_heightfield(32, &params).unwrap());
        assert!(a.values().data().iter().all(|v| v.abs() <= 1.0));
        let b = perlin_heightfield(32, &PerlinParams { seed: 12, ..params }).unwrap();
        assert_ne!(a, b);
        assert!(matches!(perlin_heightfield(1, &params), Err(Error::Contract(_))));
    }

    #[test]
    fn amplitude_sum() {
        let p = PerlinParams {
            octaves: 3,
            persistence: 0.5,
            ..Default::default()
        };
        assert_eq!(p.amplitude_sum(), 1.75);
    }
}
