//! Convolution layers whose weights live in a [`ParamStore`] under
//! `<prefix>.weight` and `<prefix>.bias`.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::param::ParamStore;
use crate::rng::Rng;
use crate::tensor::{Init, Scalar};

/// Standard deviation of the Gaussian used for every convolution kernel.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conv2dLayer {
    pub weight: String,
    pub bias: String,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn create(
        store: &mut ParamStore<f32>,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layer = Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            stride,
            padding,
            in_channels,
            out_channels,
            kernel,
        };
        store.create(
            layer.weight.clone(),
            &[out_channels, in_channels, kernel, kernel],
            Init::Normal { mean: 0.0, std: INIT_STD },
            rng,
        )?;
        store.create(layer.bias.clone(), &[out_channels], Init::Zeros, rng)?;
        Ok(layer)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(lookup(params, &self.weight)?);
        let b = g.param(lookup(params, &self.bias)?);
        g.conv2d(x, w, Some(b), self.stride, self.padding)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvTranspose2dLayer {
    pub weight: String,
    pub bias: String,
    pub stride: usize,
    pub padding: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvTranspose2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn create(
        store: &mut ParamStore<f32>,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layer = Self {
            weight: format!("{prefix}.weight"),
            bias: format!("{prefix}.bias"),
            stride,
            padding,
            in_channels,
            out_channels,
            kernel,
        };
        store.create(
            layer.weight.clone(),
            &[in_channels, out_channels, kernel, kernel],
            Init::Normal { mean: 0.0, std: INIT_STD },
            rng,
        )?;
        store.create(layer.bias.clone(), &[out_channels], Init::Zeros, rng)?;
        Ok(layer)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(lookup(params, &self.weight)?);
        let b = g.param(lookup(params, &self.bias)?);
        g.conv2d_transpose(x, w, Some(b), self.stride, self.padding)
    }
}

pub(crate) fn lookup<'a, T: Scalar>(
    params: &'a ParamStore<T>,
    name: &str,
) -> Result<&'a crate::param::Parameter<T>> {
    params
        .get(name)
        .ok_or_else(|| Error::State(format!("parameter {name} missing from store")))
}
