//! Paired DEM/RGB dataset construction from georeferenced rasters.

mod dataset;
pub mod fixture;
mod imagery;
mod png;
mod polygon;
mod raster;

pub use dataset::{
    build_dataset, denormalize_value, load_dataset, normalize_value, save_dataset, BuildOptions, DatasetReader,
    DemNormalizer, Manifest, SkippedTile, TilePair, TileRef, DATASET_MAGIC, DEFAULT_TILE_SIZE,
};
pub use imagery::{acquire_rgb, fixture_path, HttpImageryClient, ImageryClient, MockFsClient, RgbTile};
pub use png::{to_byte, write_gray_png, write_rgb_png};
pub use polygon::GeoPolygon;
pub use raster::{
    compute_stats, footprint_polygon, load_raster, parse_ascii_grid, read_raw, save_raw, sidecar_path, tile_raster,
    write_ascii_grid, write_raw, DatasetStats, GeoRaster, GeoTransform, RasterFormat, Tile, Tiling, RASTER_MAGIC,
};
