//! Georeferenced elevation rasters: ASCII grid and raw ingestion, global
//! statistics, tiling, and tile footprints.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::polygon::GeoPolygon;

pub const RASTER_MAGIC: &[u8; 4] = b"TFRA";

/// `(origin_lon, origin_lat, pixel_size_lon, pixel_size_lat)`. The origin is
/// the north-west corner; `pixel_size_lat` is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub pixel_size_lon: f64,
    pub pixel_size_lat: f64,
}

impl GeoTransform {
    /// Geographic coordinates of the north-west corner of pixel `(row, col)`.
    pub fn corner(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_lon + col as f64 * self.pixel_size_lon,
            self.origin_lat + row as f64 * self.pixel_size_lat,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoRaster {
    pub width: usize,
    pub height: usize,
    pub geotransform: GeoTransform,
    /// Elevations in meters, row-major from the north-west corner.
    pub values: Vec<f32>,
    pub nodata: Option<f32>,
}

impl GeoRaster {
    pub fn new(
        width: usize,
        height: usize,
        geotransform: GeoTransform,
        values: Vec<f32>,
        nodata: Option<f32>,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Contract(format!(
                "{width}x{height} raster needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if geotransform.pixel_size_lon == 0.0 || geotransform.pixel_size_lat == 0.0 {
            return Err(Error::Contract("pixel sizes must be nonzero".into()));
        }
        Ok(Self {
            width,
            height,
            geotransform,
            values,
            nodata,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn is_nodata(&self, v: f32) -> bool {
        v.is_nan() || self.nodata == Some(v)
    }

    /// Valid (non-nodata) cells.
    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().copied().filter(|&v| !self.is_nodata(v))
    }

    /// Rectangular window with its own geotransform.
    pub fn window(&self, row: usize, col: usize, height: usize, width: usize) -> Result<GeoRaster> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Contract(format!(
                "window {height}x{width} at ({row}, {col}) exceeds {}x{} raster",
                self.height, self.width
            )));
        }
        let mut values = Vec::with_capacity(width * height);
        for r in row..row + height {
            let start = r * self.width + col;
            values.extend_from_slice(&self.values[start..start + width]);
        }
        let (origin_lon, origin_lat) = self.geotransform.corner(row, col);
        GeoRaster::new(
            width,
            height,
            GeoTransform {
                origin_lon,
                origin_lat,
                ..self.geotransform
            },
            values,
            self.nodata,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterFormat {
    AsciiGrid,
    RawWithSidecar,
}

impl FromStr for RasterFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ascii_grid" | "ascii-grid" | "asc" => Ok(RasterFormat::AsciiGrid),
            "raw_with_sidecar" | "raw" => Ok(RasterFormat::RawWithSidecar),
            other => Err(Error::Config(format!("unknown raster format {other:?}"))),
        }
    }
}

impl RasterFormat {
    /// Guess from the extension: `.asc` is an ASCII grid, anything else raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("asc") => RasterFormat::AsciiGrid,
            _ => RasterFormat::RawWithSidecar,
        }
    }
}

pub fn load_raster(path: &Path, format: RasterFormat) -> Result<GeoRaster> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        RasterFormat::AsciiGrid => parse_ascii_grid(BufReader::new(file)),
        RasterFormat::RawWithSidecar => {
            let mut raster = read_raw(&mut BufReader::new(file))?;
            let sidecar = sidecar_path(path);
            if sidecar.exists() {
                let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
                let meta: RawSidecar =
                    serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
                if (meta.width, meta.height) != (raster.width, raster.height) || meta.geotransform != raster.geotransform {
                    return Err(Error::Corruption(format!(
                        "sidecar {} disagrees with raster header",
                        sidecar.display()
                    )));
                }
                raster.nodata = meta.nodata;
            }
            Ok(raster)
        }
    }
}

/// Parse an ESRI ASCII grid: six header lines (`ncols`, `nrows`,
/// `xllcorner`/`xllcenter`, `yllcorner`/`yllcenter`, `cellsize`, optional
/// `NODATA_value`) followed by rows from north to south.
pub fn parse_ascii_grid(r: impl BufRead) -> Result<GeoRaster> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut center = false;
    let mut cellsize = None;
    let mut nodata = None;
    let mut values = Vec::new();
    let mut in_body = false;
    for (i, line) in r.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: n,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let first = trimmed.split_whitespace().next().unwrap_or("");
        if !in_body && first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let mut words = trimmed.split_whitespace();
            let key = words.next().unwrap_or("").to_ascii_lowercase();
            let value = words.next().ok_or_else(|| Error::Parse {
                line: n,
                message: format!("header key {key} has no value"),
            })?;
            let num = |v: &str| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line: n,
                    message: format!("invalid number {v:?} for {key}"),
                })
            };
            let count = |v: &str| {
                v.parse::<usize>().map_err(|_| Error::Parse {
                    line: n,
                    message: format!("invalid count {v:?} for {key}"),
                })
            };
            match key.as_str() {
                "ncols" => ncols = Some(count(value)?),
                "nrows" => nrows = Some(count(value)?),
                "xllcorner" => xll = Some(num(value)?),
                "yllcorner" => yll = Some(num(value)?),
                "xllcenter" => {
                    xll = Some(num(value)?);
                    center = true;
                }
                "yllcenter" => {
                    yll = Some(num(value)?);
                    center = true;
                }
                "cellsize" => cellsize = Some(num(value)?),
                "nodata_value" => nodata = Some(num(value)? as f32),
                _ => {
                    return Err(Error::Parse {
                        line: n,
                        message: format!("unknown header key {key:?}"),
                    })
                }
            }
            continue;
        }
        in_body = true;
        for word in trimmed.split_whitespace() {
            let v: f32 = word.parse().map_err(|_| Error::Parse {
                line: n,
                message: format!("invalid elevation {word:?}"),
            })?;
            values.push(v);
        }
    }
    let missing = |k: &str| Error::Parse {
        line: 0,
        message: format!("header lacks {k}"),
    };
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let mut xll = xll.ok_or_else(|| missing("xllcorner"))?;
    let mut yll = yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    if !(cellsize > 0.0) {
        return Err(Error::Parse {
            line: 0,
            message: format!("cellsize must be positive, got {cellsize}"),
        });
    }
    if values.len() != ncols * nrows {
        return Err(Error::Parse {
            line: 0,
            message: format!(
                "expected {} values for {ncols}x{nrows}, found {}",
                ncols * nrows,
                values.len()
            ),
        });
    }
    if center {
        xll -= cellsize / 2.0;
        yll -= cellsize / 2.0;
    }
    GeoRaster::new(
        ncols,
        nrows,
        GeoTransform {
            origin_lon: xll,
            origin_lat: yll + nrows as f64 * cellsize,
            pixel_size_lon: cellsize,
            pixel_size_lat: -cellsize,
        },
        values,
        nodata,
    )
}

/// Write an ASCII grid. Requires square pixels.
pub fn write_ascii_grid(raster: &GeoRaster, w: &mut impl Write) -> Result<()> {
    let gt = &raster.geotransform;
    if gt.pixel_size_lon != -gt.pixel_size_lat {
        return Err(Error::Contract("ASCII grids need square pixels".into()));
    }
    let io = |e: std::io::Error| Error::Corruption(format!("writing ASCII grid: {e}"));
    let cellsize = gt.pixel_size_lon;
    writeln!(w, "ncols {}", raster.width).map_err(io)?;
    writeln!(w, "nrows {}", raster.height).map_err(io)?;
    writeln!(w, "xllcorner {}", gt.origin_lon).map_err(io)?;
    writeln!(w, "yllcorner {}", gt.origin_lat - raster.height as f64 * cellsize).map_err(io)?;
    writeln!(w, "cellsize {cellsize}").map_err(io)?;
    if let Some(nd) = raster.nodata {
        writeln!(w, "NODATA_value {nd}").map_err(io)?;
    }
    for row in raster.values.chunks(raster.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" ")).map_err(io)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSidecar {
    width: usize,
    height: usize,
    geotransform: GeoTransform,
    nodata: Option<f32>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_raw(raster: &GeoRaster, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(RASTER_MAGIC)?;
    w.write_all(&(raster.width as u32).to_le_bytes())?;
    w.write_all(&(raster.height as u32).to_le_bytes())?;
    let gt = &raster.geotransform;
    for v in [gt.origin_lon, gt.origin_lat, gt.pixel_size_lon, gt.pixel_size_lat] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &raster.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_raw(r: &mut impl Read) -> Result<GeoRaster> {
    let eof = |e: std::io::Error| Error::Corruption(format!("raw raster: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != RASTER_MAGIC {
        return Err(Error::Corruption("not a raw raster (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(eof)?;
    let width = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4).map_err(eof)?;
    let height = u32::from_le_bytes(b4) as usize;
    let mut gt = [0.0f64; 4];
    for v in gt.iter_mut() {
        r.read_exact(&mut b8).map_err(eof)?;
        *v = f64::from_le_bytes(b8);
    }
    let mut bytes = vec![0u8; width * height * 4];
    r.read_exact(&mut bytes).map_err(eof)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    GeoRaster::new(
        width,
        height,
        GeoTransform {
            origin_lon: gt[0],
            origin_lat: gt[1],
            pixel_size_lon: gt[2],
            pixel_size_lat: gt[3],
        },
        values,
        None,
    )
    .map_err(|e| Error::Corruption(e.to_string()))
}

/// Write the raw raster and its JSON sidecar next to it.
pub fn save_raw(raster: &GeoRaster, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_raw(raster, &mut w).and_then(|_| w.flush()).map_err(io)?;
    let sidecar = sidecar_path(path);
    let meta = RawSidecar {
        width: raster.width,
        height: raster.height,
        geotransform: raster.geotransform,
        nodata: raster.nodata,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
}

/// Dataset-wide elevation range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub global_min: f64,
    pub global_max: f64,
    pub tile_count: usize,
}

/// Min and max over every valid cell of every raster. `tile_count` is left
/// at zero for the caller to fill.
pub fn compute_stats(rasters: &[GeoRaster]) -> Result<DatasetStats> {
    let mut range: Option<(f64, f64)> = None;
    for v in rasters.iter().flat_map(|r| r.valid_values()) {
        let v = v as f64;
        range = Some(match range {
            None => (v, v),
            Some((lo, hi)) => (lo.min(v), hi.max(v)),
        });
    }
    let (global_min, global_max) =
        range.ok_or_else(|| Error::EmptyData("no valid elevation cells in any raster".into()))?;
    Ok(DatasetStats {
        global_min,
        global_max,
        tile_count: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub raster: GeoRaster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tiling {
    /// Kept tiles in row-major order.
    pub tiles: Vec<Tile>,
    /// Tiles dropped because they contained nodata cells.
    pub dropped_nodata: Vec<(usize, usize)>,
    /// Set when the raster is smaller than one tile.
    pub warning: Option<String>,
}

/// Non-overlapping `tile_size` squares anchored at the north-west corner.
/// Partial edge remainders and tiles with any nodata cell are dropped.
pub fn tile_raster(raster: &GeoRaster, tile_size: usize) -> Result<Tiling> {
    if tile_size == 0 {
        return Err(Error::Config("tile size must be positive".into()));
    }
    let rows = raster.height / tile_size;
    let cols = raster.width / tile_size;
    let warning = (rows == 0 || cols == 0).then(|| {
        format!(
            "{}x{} raster is smaller than one {tile_size}x{tile_size} tile",
            raster.height, raster.width
        )
    });
    let mut tiles = Vec::with_capacity(rows * cols);
    let mut dropped_nodata = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let sub = raster.window(row * tile_size, col * tile_size, tile_size, tile_size)?;
            if sub.values.iter().any(|&v| sub.is_nodata(v)) {
                dropped_nodata.push((row, col));
            } else {
                tiles.push(Tile { row, col, raster: sub });
            }
        }
    }
    Ok(Tiling {
        tiles,
        dropped_nodata,
        warning,
    })
}

/// Footprint of tile `(row, col)` as a closed counter-clockwise rectangle.
pub fn footprint_polygon(raster: &GeoRaster, row: usize, col: usize, tile_size: usize) -> Result<GeoPolygon> {
    if tile_size == 0 || (row + 1) * tile_size > raster.height || (col + 1) * tile_size > raster.width {
        return Err(Error::Contract(format!(
            "tile ({row}, {col}) of size {tile_size} lies outside the {}x{} raster",
            raster.height, raster.width
        )));
    }
    let gt = &raster.geotransform;
    let (west, north) = gt.corner(row * tile_size, col * tile_size);
    let (east, south) = gt.corner((row + 1) * tile_size, (col + 1) * tile_size);
    let (south, north) = if south <= north { (south, north) } else { (north, south) };
    let (west, east) = if west <= east { (west, east) } else { (east, west) };
    GeoPolygon::new(vec![
        [west, south],
        [east, south],
        [east, north],
        [west, north],
        [west, south],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(w: usize, h: usize) -> GeoRaster {
        GeoRaster::new(
            w,
            h,
            GeoTransform {
                origin_lon: 20.0,
                origin_lat: 40.0,
                pixel_size_lon: 0.001,
                pixel_size_lat: -0.001,
            },
            (0..w * h).map(|v| v as f32).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn ascii_header_mapping() {
        let text = "ncols 2\nnrows 2\nxllcorner 20.0\nyllcorner 39.998\ncellsize 0.001\nNODATA_value -9999\n1 2\n3 -9999\n";
        let r = parse_ascii_grid(text.as_bytes()).unwrap();
        assert_eq!((r.width, r.height), (2, 2));
        let gt = r.geotransform;
        assert_eq!(gt.origin_lon, 20.0);
        assert!((gt.origin_lat - 40.0).abs() < 1e-12);
        assert_eq!((gt.pixel_size_lon, gt.pixel_size_lat), (0.001, -0.001));
        assert_eq!(r.nodata, Some(-9999.0));
        assert_eq!(r.valid_values().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn ascii_count_mismatch_and_bad_token() {
        let short = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        assert!(matches!(parse_ascii_grid(short.as_bytes()), Err(Error::Parse { .. })));
        let bad = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 x\n";
        match parse_ascii_grid(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ascii_write_parse_round_trip() {
        let mut r = raster(3, 2);
        r.nodata = Some(-1.0);
        let mut buf = Vec::new();
        write_ascii_grid(&r, &mut buf).unwrap();
        let back = parse_ascii_grid(buf.as_slice()).unwrap();
        assert_eq!(back.values, r.values);
        assert!((back.geotransform.origin_lat - 40.0).abs() < 1e-12);
    }

    #[test]
    fn raw_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.tfra");
        let mut r = raster(5, 3);
        r.values[4] = f32::from_bits(0x3f80_0001);
        r.nodata = Some(-32768.0);
        save_raw(&r, &path).unwrap();
        assert!(sidecar_path(&path).exists());
        let back = load_raster(&path, RasterFormat::RawWithSidecar).unwrap();
        assert_eq!(back, r);
        let bytes = fs::read(&path).unwrap();
        assert!(read_raw(&mut &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn stats() {
        let mut a = raster(2, 1);
        a.values = vec![0.0, 2000.0];
        assert_eq!(compute_stats(&[a.clone()]).unwrap().global_min, 0.0);
        assert_eq!(compute_stats(&[a.clone()]).unwrap().global_max, 2000.0);
        let mut b = raster(2, 1);
        b.values = vec![-5.0, 9999.0];
        b.nodata = Some(9999.0);
        let s = compute_stats(&[a, b.clone()]).unwrap();
        assert_eq!((s.global_min, s.global_max), (-5.0, 2000.0));
        b.values = vec![9999.0, 9999.0];
        assert!(matches!(compute_stats(&[b]), Err(Error::EmptyData(_))));
    }

    #[test]
    fn tiling_arithmetic() {
        assert_eq!(tile_raster(&raster(700, 1000), 256).unwrap().tiles.len(), 6);
        let one = tile_raster(&raster(256, 256), 256).unwrap();
        assert_eq!(one.tiles.len(), 1);
        assert_eq!(one.tiles[0].raster, raster(256, 256));
        let none = tile_raster(&raster(512, 255), 256).unwrap();
        assert!(none.tiles.is_empty());
        assert!(none.warning.is_some());
    }

    #[test]
    fn nodata_tiles_are_dropped() {
        let mut r = raster(8, 4);
        r.nodata = Some(-1.0);
        r.values[5] = -1.0;
        let t = tile_raster(&r, 4).unwrap();
        assert_eq!(t.tiles.len(), 1);
        assert_eq!(t.dropped_nodata, vec![(0, 1)]);
        assert_eq!((t.tiles[0].row, t.tiles[0].col), (0, 0));
    }

    #[test]
    fn footprints() {
        let r = raster(512, 512);
        let p = footprint_polygon(&r, 0, 0, 256).unwrap();
        let (lon, lat) = p.bounds();
        assert_eq!(lon.0, 20.0);
        assert!((lon.1 - 20.256).abs() < 1e-12);
        assert!((lat.0 - 39.744).abs() < 1e-12);
        assert_eq!(lat.1, 40.0);
        let q = footprint_polygon(&r, 0, 1, 256).unwrap();
        assert!((q.bounds().0 .0 - 20.256).abs() < 1e-12);
        assert_eq!(q.bounds().0 .0, p.bounds().0 .1);
        assert!(matches!(footprint_polygon(&r, 2, 0, 256), Err(Error::Contract(_))));
    }
}
