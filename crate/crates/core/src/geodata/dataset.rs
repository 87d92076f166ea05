//! Normalization and the paired (DEM, RGB) dataset file.
//!
//! File layout: magic `TFDS`, version (u16 LE), manifest length (u32 LE),
//! manifest JSON, then one record per pair: metadata length (u32 LE),
//! metadata JSON (source raster, tile row/col, GeoJSON footprint), the DEM
//! tensor and the RGB tensor in `TFTN` encoding. The manifest's
//! `content_digest` is the SHA-256 of everything after the manifest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::imagery::{acquire_rgb, ImageryClient};
use super::polygon::GeoPolygon;
use super::raster::{compute_stats, footprint_polygon, tile_raster, DatasetStats, GeoRaster};

pub const DATASET_MAGIC: &[u8; 4] = b"TFDS";
pub const DATASET_VERSION: u16 = 1;
pub const DEFAULT_TILE_SIZE: usize = 256;

fn check_stats(stats: &DatasetStats) -> Result<f64> {
    let span = stats.global_max - stats.global_min;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::Config(format!(
            "degenerate elevation range [{}, {}]",
            stats.global_min, stats.global_max
        )));
    }
    Ok(span)
}

/// `2 (v - min) / (max - min) - 1`, unclamped.
pub fn normalize_value(v: f64, stats: &DatasetStats) -> Result<f64> {
    let span = check_stats(stats)?;
    Ok(2.0 * (v - stats.global_min) / span - 1.0)
}

/// Inverse of [`normalize_value`].
pub fn denormalize_value(x: f64, stats: &DatasetStats) -> Result<f64> {
    let span = check_stats(stats)?;
    Ok(stats.global_min + (x + 1.0) / 2.0 * span)
}

/// Min-max normalizer that clamps out-of-range elevations to [-1, 1] and
/// counts how many it clamped.
#[derive(Debug, Clone)]
pub struct DemNormalizer {
    stats: DatasetStats,
    clamped: u64,
}

impl DemNormalizer {
    pub fn new(stats: DatasetStats) -> Result<Self> {
        check_stats(&stats)?;
        Ok(Self { stats, clamped: 0 })
    }

    pub fn clamped(&self) -> u64 {
        self.clamped
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn normalize(&mut self, v: f64) -> f64 {
        let x = normalize_value(v, &self.stats).expect("stats checked on construction");
        if x < -1.0 || x > 1.0 {
            self.clamped += 1;
        }
        x.clamp(-1.0, 1.0)
    }

    /// Normalize meters into a `[1, N, N]` tile.
    pub fn normalize_dem(&mut self, values: &[f32], size: usize) -> Result<Tensor> {
        let data = values.iter().map(|&v| self.normalize(v as f64) as f32).collect();
        Tensor::from_vec(&[1, size, size], data)
    }

    /// Back to meters.
    pub fn denormalize_dem(&self, tile: &Tensor) -> Vec<f64> {
        tile.data()
            .iter()
            .map(|&x| denormalize_value(x as f64, &self.stats).expect("stats checked on construction"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilePair {
    /// `[1, N, N]` in [-1, 1].
    pub dem: Tensor,
    /// `[3, N, N]` in [-1, 1].
    pub rgb: Tensor,
    pub footprint: GeoPolygon,
    pub raster: usize,
    pub row: usize,
    pub col: usize,
}

impl TilePair {
    pub fn validate(&self) -> Result<()> {
        let n = self.dem.shape().get(1).copied().unwrap_or(0);
        if self.dem.shape() != [1, n, n] || self.rgb.shape() != [3, n, n] {
            return Err(Error::Shape(format!(
                "tile pair needs [1,N,N] and [3,N,N], got {:?} and {:?}",
                self.dem.shape(),
                self.rgb.shape()
            )));
        }
        let in_range = |t: &Tensor| t.data().iter().all(|v| v.abs() <= 1.0);
        if !in_range(&self.dem) || !in_range(&self.rgb) {
            return Err(Error::Corruption("tile pair values outside [-1, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRef {
    pub raster: usize,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTile {
    pub raster: usize,
    pub row: usize,
    pub col: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tile_size: usize,
    pub stats: DatasetStats,
    pub tile_count: usize,
    pub dropped_nodata: Vec<TileRef>,
    pub skipped: Vec<SkippedTile>,
    pub warnings: Vec<String>,
    pub clamped: u64,
    pub content_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub tile_size: usize,
    pub retries: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            retries: 2,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PairMeta {
    raster: usize,
    row: usize,
    col: usize,
    footprint: serde_json::Value,
}

fn encode_pair(pair: &TilePair, out: &mut Vec<u8>) -> Result<()> {
    let meta = PairMeta {
        raster: pair.raster,
        row: pair.row,
        col: pair.col,
        footprint: pair.footprint.to_geojson(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Config(e.to_string()))?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&pair.dem.to_bytes());
    out.extend_from_slice(&pair.rgb.to_bytes());
    Ok(())
}

/// Write `pairs` under `manifest`, filling in its count and digest.
pub fn save_dataset(path: &Path, manifest: &mut Manifest, pairs: &[TilePair]) -> Result<()> {
    let mut body = Vec::new();
    for p in pairs {
        p.validate()?;
        encode_pair(p, &mut body)?;
    }
    manifest.tile_count = pairs.len();
    manifest.content_digest = hex::encode(Sha256::digest(&body));
    let json = serde_json::to_vec(manifest).map_err(|e| Error::Config(e.to_string()))?;
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(DATASET_MAGIC).map_err(io)?;
    w.write_all(&DATASET_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    w.write_all(&body).map_err(io)?;
    w.flush().map_err(io)
}

/// Tile every raster, fetch imagery per kept tile, normalize both bands and
/// write the dataset. Tiles whose imagery cannot be obtained are skipped,
/// logged and listed in the manifest.
pub fn build_dataset(
    rasters: &[GeoRaster],
    client: &dyn ImageryClient,
    options: &BuildOptions,
    output: &Path,
) -> Result<Manifest> {
    let stats = compute_stats(rasters)?;
    let mut normalizer = DemNormalizer::new(stats)?;
    let ts = options.tile_size;
    let mut pairs = Vec::new();
    let mut dropped_nodata = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    for (ri, raster) in rasters.iter().enumerate() {
        let tiling = tile_raster(raster, ts)?;
        if let Some(w) = tiling.warning {
            log::warn!("raster {ri}: {w}");
            warnings.push(format!("raster {ri}: {w}"));
        }
        dropped_nodata.extend(tiling.dropped_nodata.iter().map(|&(row, col)| TileRef { raster: ri, row, col }));
        for tile in tiling.tiles {
            let footprint = footprint_polygon(raster, tile.row, tile.col, ts)?;
            let rgb = match acquire_rgb(client, &footprint, ts, options.retries) {
                Ok(rgb) => rgb,
                Err(e) => {
                    log::warn!("skipping tile ({ri}, {}, {}): {e}", tile.row, tile.col);
                    skipped.push(SkippedTile {
                        raster: ri,
                        row: tile.row,
                        col: tile.col,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            pairs.push(TilePair {
                dem: normalizer.normalize_dem(&tile.raster.values, ts)?,
                rgb: rgb.to_tensor(),
                footprint,
                raster: ri,
                row: tile.row,
                col: tile.col,
            });
        }
    }
    let mut manifest = Manifest {
        tile_size: ts,
        stats: DatasetStats {
            tile_count: pairs.len(),
            ..stats
        },
        tile_count: pairs.len(),
        dropped_nodata,
        skipped,
        warnings,
        clamped: normalizer.clamped(),
        content_digest: String::new(),
    };
    save_dataset(output, &mut manifest, &pairs)?;
    Ok(manifest)
}

/// Streaming reader. Opening verifies the content digest in one pass over
/// the file; pairs are then decoded one at a time.
pub struct DatasetReader {
    path: PathBuf,
    manifest: Manifest,
    reader: BufReader<File>,
    remaining: usize,
}

fn corrupt(e: std::io::Error) -> Error {
    Error::Corruption(format!("dataset truncated or unreadable: {e}"))
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic).map_err(corrupt)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Corruption(format!("{} is not a dataset file", path.display())));
        }
        let mut b2 = [0u8; 2];
        reader.read_exact(&mut b2).map_err(corrupt)?;
        if u16::from_le_bytes(b2) != DATASET_VERSION {
            return Err(Error::Corruption("unsupported dataset version".into()));
        }
        let mut b4 = [0u8; 4];
        reader.read_exact(&mut b4).map_err(corrupt)?;
        let mut json = vec![0u8; u32::from_le_bytes(b4) as usize];
        reader.read_exact(&mut json).map_err(corrupt)?;
        let manifest: Manifest =
            serde_json::from_slice(&json).map_err(|e| Error::Corruption(format!("dataset manifest: {e}")))?;
        let body_start = reader.stream_position().map_err(corrupt)?;
        let mut hasher = Sha256::new();
        std::io::copy(&mut reader, &mut hasher).map_err(corrupt)?;
        if hex::encode(hasher.finalize()) != manifest.content_digest {
            return Err(Error::Corruption(format!(
                "{} does not match its manifest digest",
                path.display()
            )));
        }
        reader.seek(SeekFrom::Start(body_start)).map_err(corrupt)?;
        Ok(Self {
            path: path.to_path_buf(),
            remaining: manifest.tile_count,
            manifest,
            reader,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn read_pair(&mut self) -> Result<TilePair> {
        let mut b4 = [0u8; 4];
        self.reader.read_exact(&mut b4).map_err(corrupt)?;
        let mut json = vec![0u8; u32::from_le_bytes(b4) as usize];
        self.reader.read_exact(&mut json).map_err(corrupt)?;
        let meta: PairMeta =
            serde_json::from_slice(&json).map_err(|e| Error::Corruption(format!("pair metadata: {e}")))?;
        let dem = Tensor::read_from(&mut self.reader)?;
        let rgb = Tensor::read_from(&mut self.reader)?;
        let pair = TilePair {
            dem,
            rgb,
            footprint: GeoPolygon::from_geojson(&meta.footprint).map_err(|e| Error::Corruption(e.to_string()))?,
            raster: meta.raster,
            row: meta.row,
            col: meta.col,
        };
        pair.validate().map_err(|e| Error::Corruption(format!("{}: {e}", self.path.display())))?;
        Ok(pair)
    }
}

impl Iterator for DatasetReader {
    type Item = Result<TilePair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let item = self.read_pair();
        if item.is_err() {
            self.remaining = 0;
        }
        Some(item)
    }
}

pub fn load_dataset(path: &Path) -> Result<(Manifest, Vec<TilePair>)> {
    let reader = DatasetReader::open(path)?;
    let manifest = reader.manifest().clone();
    let pairs = reader.collect::<Result<Vec<_>>>()?;
    Ok((manifest, pairs))
}
