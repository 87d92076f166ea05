//! Procedural terrain from adversarial networks.
//!
//! A progressive-growing GAN synthesizes satellite-like texture tiles from
//! noise, a conditional U-Net/PatchGAN pair translates texture tiles to
//! elevation tiles (and elevation back to coloration), a geospatial pipeline
//! builds paired RGB/DEM training sets from georeferenced rasters, and the
//! terrain module turns (DEM, RGB) pairs into colored triangle meshes.
//!
//! Everything runs on a small dense tensor engine with tape-based reverse
//! mode differentiation ([`graph`]).

pub mod checkpoint;
pub mod error;
pub mod gan;
pub mod geodata;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod ops;
pub mod param;
pub mod pix2pix;
pub mod progan;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod terrain;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use graph::{Gradients, Graph, Var};
pub use param::{Optimizer, ParamStore, Parameter};
pub use rng::Rng;
pub use tensor::{Init, Scalar, Tensor};
