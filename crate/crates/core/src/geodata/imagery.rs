//! Sources of true-color imagery for tile footprints.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::polygon::GeoPolygon;

/// 8-bit RGB tile, row-major interleaved triplets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbTile {
    pub size: usize,
    pub bytes: Vec<u8>,
}

impl RgbTile {
    /// Channels-first `[3, size, size]` tensor with `b / 127.5 - 1`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.size * self.size;
        let mut data = vec![0.0f32; 3 * plane];
        for (k, px) in self.bytes.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + k] = px[c] as f32 / 127.5 - 1.0;
            }
        }
        Tensor::from_vec(&[3, self.size, self.size], data).expect("3 * size^2 values")
    }
}

pub trait ImageryClient {
    /// Interleaved RGB bytes covering `polygon` at `size x size` pixels.
    fn fetch(&self, polygon: &GeoPolygon, size: usize) -> Result<Vec<u8>>;
}

/// Fixture directory of `<polygon digest>.rgb` files.
#[derive(Debug, Clone)]
pub struct MockFsClient {
    dir: PathBuf,
}

impl MockFsClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn fixture_path(&self, polygon: &GeoPolygon) -> PathBuf {
        fixture_path(&self.dir, polygon)
    }
}

pub fn fixture_path(dir: &Path, polygon: &GeoPolygon) -> PathBuf {
    dir.join(format!("{}.rgb", polygon.digest()))
}

impl ImageryClient for MockFsClient {
    fn fetch(&self, polygon: &GeoPolygon, _size: usize) -> Result<Vec<u8>> {
        let path = self.fixture_path(polygon);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFixture(polygon.digest())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

/// Remote imagery endpoint. Not wired to a live service.
///
/// Contract: `POST {endpoint}` with body
/// `{"geometry": <GeoJSON Polygon>, "size": n, "bands": ["red", "green", "blue"]}`
/// answered by `n * n * 3` bytes of row-major interleaved 8-bit RGB.
/// Transient failures (timeouts, 5xx) are retryable; 4xx are not.
#[derive(Debug, Clone)]
pub struct HttpImageryClient {
    pub endpoint: String,
}

impl ImageryClient for HttpImageryClient {
    fn fetch(&self, polygon: &GeoPolygon, _size: usize) -> Result<Vec<u8>> {
        Err(Error::Fetch {
            polygon: polygon.digest(),
            message: format!("no HTTP transport is available for {}", self.endpoint),
            retryable: false,
        })
    }
}

/// Fetch with up to `retries` extra attempts on retryable failures, then
/// check the extent.
pub fn acquire_rgb(client: &dyn ImageryClient, polygon: &GeoPolygon, size: usize, retries: usize) -> Result<RgbTile> {
    let mut attempt = 0;
    let bytes = loop {
        match client.fetch(polygon, size) {
            Ok(b) => break b,
            Err(Error::Fetch {
                retryable: true,
                message,
                ..
            }) => {
                attempt += 1;
                if attempt > retries {
                    return Err(Error::Fetch {
                        polygon: polygon.digest(),
                        message: format!("giving up after {attempt} attempts: {message}"),
                        retryable: false,
                    });
                }
                log::warn!("imagery fetch for {} failed ({message}), retrying", polygon.digest());
            }
            Err(e) => return Err(e),
        }
    };
    if bytes.len() != size * size * 3 {
        return Err(Error::Contract(format!(
            "imagery for {} has {} bytes, expected {size}x{size}x3",
            polygon.digest(),
            bytes.len()
        )));
    }
    Ok(RgbTile { size, bytes })
}
