//! Non-neural terrain utilities: Perlin height fields, latent
//! interpolation, and conversion of (DEM, RGB) tiles into meshes.

mod mesh;
mod perlin;

pub use mesh::{
    build_mesh, export_mesh, point_cloud, read_ply, read_ply_file, to_u8, write_obj, write_ply, MeshFormat,
    PlyMesh, PointCloud, TriMesh, DEFAULT_VERTICAL_SCALE,
};
pub use perlin::{perlin_heightfield, Perlin, PerlinParams};

use crate::error::{Error, Result};
use crate::pix2pix::{translate, Direction, TranslationModel};
use crate::tensor::Tensor;

/// Square grid of normalized elevations in [-1, 1], stored `[N, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    values: Tensor,
}

impl HeightField {
    /// Accepts `[N, N]` or `[1, N, N]` with N >= 2 and values in [-1, 1].
    pub fn new(values: Tensor) -> Result<Self> {
        let n = match values.shape() {
            [a, b] if a == b => *a,
            [1, a, b] if a == b => *a,
            other => return Err(Error::Contract(format!("height field must be square, got {other:?}"))),
        };
        if n < 2 {
            return Err(Error::Contract(format!("height field needs N >= 2, got {n}")));
        }
        if values.data().iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::Contract("height field values must lie in [-1, 1]".into()));
        }
        Ok(Self {
            values: values.reshape(&[n, n])?,
        })
    }

    pub fn size(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// The field as a `[1, N, N]` DEM tile.
    pub fn to_tile(&self) -> Tensor {
        let n = self.size();
        self.values.reshape(&[1, n, n]).expect("same element count")
    }
}

/// `steps` points `(1-t) z0 + t z1`, `t = k/(steps-1)`. The endpoints are
/// copies of `z0` and `z1`.
pub fn interpolate_latents(z0: &Tensor, z1: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
    if steps < 2 {
        return Err(Error::Contract(format!("interpolation needs at least 2 steps, got {steps}")));
    }
    if z0.shape() != z1.shape() {
        return Err(Error::Contract(format!(
            "latent shapes differ: {:?} vs {:?}",
            z0.shape(),
            z1.shape()
        )));
    }
    let last = steps - 1;
    (0..steps)
        .map(|k| match k {
            0 => Ok(z0.clone()),
            k if k == last => Ok(z1.clone()),
            k => {
                let t = k as f64 / last as f64;
                z0.zip_map(z1, |a, b| ((1.0 - t) * a as f64 + t * b as f64) as f32)
            }
        })
        .collect()
}

/// Color a height field with an inverse (DEM to RGB) translation model.
/// Returns `([1, N, N], [3, N, N])`.
pub fn colorize_perlin(dem: &HeightField, inverse_model: &TranslationModel) -> Result<(Tensor, Tensor)> {
    if inverse_model.direction != Direction::DemToRgb {
        return Err(Error::Contract(format!(
            "colorizing needs a dem_to_rgb model, got {}",
            inverse_model.direction
        )));
    }
    let n = dem.size();
    if n != inverse_model.resolution() {
        return Err(Error::Contract(format!(
            "height field is {n}x{n} but the model works at {}",
            inverse_model.resolution()
        )));
    }
    let tile = dem.to_tile();
    let rgb = translate(inverse_model, &tile.reshape(&[1, 1, n, n])?)?;
    Ok((tile, rgb.reshape(&[3, n, n])?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pix2pix::TranslationConfig;
    use crate::rng::Rng;

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let z0 = Tensor::from_vec(&[2], vec![0.0f32, 0.0]).unwrap();
        let z1 = Tensor::from_vec(&[2], vec![2.0f32, 4.0]).unwrap();
        let path = interpolate_latents(&z0, &z1, 3).unwrap();
        assert_eq!(path[0], z0);
        assert_eq!(path[2], z1);
        assert_eq!(path[1].data(), &[1.0, 2.0]);
        let long = interpolate_latents(&z0, &z1, 7).unwrap();
        for w in long.windows(2) {
            assert!(w[1].data()[0] >= w[0].data()[0]);
        }
        assert!(interpolate_latents(&z0, &z1, 1).is_err());
        assert!(interpolate_latents(&z0, &Tensor::zeros(&[3]), 3).is_err());
    }

    #[test]
    fn colorize_contract() {
        let config = TranslationConfig {
            direction: Direction::DemToRgb,
            resolution: 16,
            base_channels: 4,
            ..Default::default()
        };
        let model = TranslationModel::new(&config, &mut Rng::new(0)).unwrap();
        let field = perlin_heightfield(16, &PerlinParams::default()).unwrap();
        let (dem, rgb) = colorize_perlin(&field, &model).unwrap();
        assert_eq!(dem.shape(), &[1, 16, 16]);
        assert_eq!(rgb.shape(), &[3, 16, 16]);
        assert_eq!(colorize_perlin(&field, &model).unwrap().1, rgb);

        let small = perlin_heightfield(8, &PerlinParams::default()).unwrap();
        assert!(matches!(colorize_perlin(&small, &model), Err(Error::Contract(_))));
        let forward = TranslationModel::new(&TranslationConfig { direction: Direction::RgbToDem, ..config }, &mut Rng::new(0)).unwrap();
        assert!(matches!(colorize_perlin(&field, &forward), Err(Error::Contract(_))));
    }

    #[test]
    fn height_field_validation() {
        assert!(HeightField::new(Tensor::zeros(&[2, 3])).is_err());
        assert!(HeightField::new(Tensor::full(&[2, 2], 1.5f32)).is_err());
        assert_eq!(HeightField::new(Tensor::zeros(&[1, 4, 4])).unwrap().size(), 4);
    }
}
