//! The bundled test region: one 512x512 ASCII-grid DEM plus imagery
//! fixtures for its four 256x256 tiles.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::terrain::{perlin_heightfield, PerlinParams};

use super::imagery::fixture_path;
use super::raster::{footprint_polygon, load_raster, tile_raster, write_ascii_grid, GeoRaster, GeoTransform, RasterFormat};

pub const DEM_FILE: &str = "dem.asc";
pub const IMAGERY_DIR: &str = "imagery";
pub const ROI_SIZE: usize = 512;
pub const ROI_TILE: usize = 256;

/// Elevations 0..=2000 m from a seeded Perlin field, rounded to meters.
pub fn fixture_dem() -> Result<GeoRaster> {
    let params = PerlinParams {
        seed: 2021,
        base_frequency: 6.0,
        octaves: 5,
        persistence: 0.5,
        lacunarity: 2.0,
    };
    let field = perlin_heightfield(ROI_SIZE, &params)?;
    let values = field
        .values()
        .data()
        .iter()
        .map(|&v| ((v as f64 + 1.0) * 1000.0).round() as f32)
        .collect();
    GeoRaster::new(
        ROI_SIZE,
        ROI_SIZE,
        GeoTransform {
            origin_lon: 20.0,
            origin_lat: 40.0,
            pixel_size_lon: 0.001,
            pixel_size_lat: -0.001,
        },
        values,
        Some(-9999.0),
    )
}

/// Elevation-banded colors with slope shading: water, grass, rock, snow.
fn shade(raster: &GeoRaster, row: usize, col: usize) -> [u8; 3] {
    let h = raster.get(row, col) as f64;
    let east = raster.get(row, (col + 1).min(raster.width - 1)) as f64;
    let south = raster.get((row + 1).min(raster.height - 1), col) as f64;
    let light = (1.0 + ((h - east) + (h - south)) / 40.0).clamp(0.6, 1.3);
    let base = match h {
        h if h < 600.0 => [40.0, 70.0, 140.0],
        h if h < 1100.0 => [70.0, 130.0, 60.0],
        h if h < 1600.0 => [120.0, 100.0, 80.0],
        _ => [230.0, 230.0, 235.0],
    };
    base.map(|c: f64| (c * light).round().clamp(0.0, 255.0) as u8)
}

/// Write the DEM and imagery fixtures into `dir`. The footprints (and so
/// the fixture names) are taken from the re-parsed grid, exactly as a
/// dataset build will see them.
pub fn write_fixture_roi(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGERY_DIR)).map_err(|e| Error::io(dir, e))?;
    let dem_path = dir.join(DEM_FILE);
    {
        let mut w = BufWriter::new(fs::File::create(&dem_path).map_err(|e| Error::io(&dem_path, e))?);
        write_ascii_grid(&fixture_dem()?, &mut w)?;
    }
    let raster = load_raster(&dem_path, RasterFormat::AsciiGrid)?;
    for tile in tile_raster(&raster, ROI_TILE)?.tiles {
        let polygon = footprint_polygon(&raster, tile.row, tile.col, ROI_TILE)?;
        let mut bytes = Vec::with_capacity(ROI_TILE * ROI_TILE * 3);
        for i in 0..ROI_TILE {
            for j in 0..ROI_TILE {
                bytes.extend_from_slice(&shade(&tile.raster, i, j));
            }
        }
        let path = fixture_path(&dir.join(IMAGERY_DIR), &polygon);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
