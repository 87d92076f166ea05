use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use terragan::geodata::{self, fixture, BuildOptions, DatasetStats, MockFsClient, RasterFormat};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/roi")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join(fixture::IMAGERY_DIR)] {
        for entry in fs::read_dir(&sub).unwrap() {
            let p = entry.unwrap().path();
            if p.is_file() {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bundled_fixtures_match_generator() {
    if std::env::var_os("TERRAGAN_REGENERATE_FIXTURES").is_some() {
        fixture::write_fixture_roi(&bundled()).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    fixture::write_fixture_roi(dir.path()).unwrap();
    let fresh = files(dir.path());
    assert_eq!(fresh.len(), 5);
    assert_eq!(files(&bundled()), fresh);
}

#[test]
fn fixture_roi_builds_four_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let raster = geodata::load_raster(&bundled().join(fixture::DEM_FILE), RasterFormat::AsciiGrid).unwrap();
    let client = MockFsClient::new(bundled().join(fixture::IMAGERY_DIR));
    let out = dir.path().join("roi.tfds");
    let manifest = geodata::build_dataset(&[raster], &client, &BuildOptions::default(), &out).unwrap();
    assert_eq!(manifest.tile_count, 4);
    assert!(manifest.skipped.is_empty());
    let (_, pairs) = geodata::load_dataset(&out).unwrap();
    let order: Vec<(usize, usize)> = pairs.iter().map(|p| (p.row, p.col)).collect();
    assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    assert_eq!(pairs[0].dem.shape(), &[1, 256, 256]);
    assert_eq!(pairs[0].rgb.shape(), &[3, 256, 256]);
}

#[test]
fn one_missing_fixture_skips_one_tile() {
    let dir = tempfile::tempdir().unwrap();
    let imagery = dir.path().join("imagery");
    fs::create_dir(&imagery).unwrap();
    let mut names: Vec<PathBuf> = fs::read_dir(bundled().join(fixture::IMAGERY_DIR))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    for p in &names[1..] {
        fs::copy(p, imagery.join(p.file_name().unwrap())).unwrap();
    }
    let raster = geodata::load_raster(&bundled().join(fixture::DEM_FILE), RasterFormat::AsciiGrid).unwrap();
    let manifest = geodata::build_dataset(
        &[raster],
        &MockFsClient::new(&imagery),
        &BuildOptions::default(),
        &dir.path().join("d.tfds"),
    )
    .unwrap();
    assert_eq!(manifest.tile_count, 3);
    assert_eq!(manifest.skipped.len(), 1);
    assert!(manifest.skipped[0].reason.contains("fixture"));
}

#[test]
fn clamp_counter_sees_values_below_training_min() {
    let stats = DatasetStats { global_min: 100.0, global_max: 300.0, tile_count: 1 };
    let mut n = geodata::DemNormalizer::new(stats).unwrap();
    let t = n.normalize_dem(&[50.0, 100.0, 200.0, 300.0], 2).unwrap();
    assert_eq!(t.data(), &[-1.0, -1.0, 0.0, 1.0]);
    assert_eq!(n.clamped(), 1);
}

proptest! {
    #[test]
    fn normalization_round_trip(min in -500.0f64..1000.0, span in 1.0f64..5000.0, t in 0.0f64..=1.0) {
        let stats = DatasetStats { global_min: min, global_max: min + span, tile_count: 1 };
        let v = min + t * span;
        let x = geodata::normalize_value(v, &stats).unwrap();
        prop_assert!((-1.0..=1.0).contains(&x));
        let back = geodata::denormalize_value(x, &stats).unwrap();
        prop_assert!((back - v).abs() <= 1e-6 * span);
    }

    #[test]
    fn tiling_is_a_partition(w in 1usize..40, h in 1usize..40, ts in 1usize..12) {
        let gt = geodata::GeoTransform { origin_lon: 0.0, origin_lat: 0.0, pixel_size_lon: 1.0, pixel_size_lat: -1.0 };
        let raster = geodata::GeoRaster::new(w, h, gt, (0..w * h).map(|v| v as f32).collect(), None).unwrap();
        let tiling = geodata::tile_raster(&raster, ts).unwrap();
        prop_assert_eq!(tiling.tiles.len(), (w / ts) * (h / ts));
        let mut seen = std::collections::HashSet::new();
        for t in &tiling.tiles {
            for &v in &t.raster.values {
                prop_assert!(seen.insert(v as usize));
            }
        }
        let kept = (h / ts) * ts * ((w / ts) * ts);
        prop_assert_eq!(seen.len(), kept);
        for &v in &seen {
            prop_assert!(v / w < (h / ts) * ts && v % w < (w / ts) * ts);
        }
    }

    #[test]
    fn adjacent_footprints_share_an_edge(row in 0usize..3, col in 0usize..3, ox in -10.0f64..10.0, ps in 0.0001f64..0.01) {
        let gt = geodata::GeoTransform { origin_lon: ox, origin_lat: 45.0, pixel_size_lon: ps, pixel_size_lat: -ps };
        let raster = geodata::GeoRaster::new(16, 16, gt, vec![0.0; 256], None).unwrap();
        let a = geodata::footprint_polygon(&raster, row, col, 4).unwrap();
        let b = geodata::footprint_polygon(&raster, row, col + 1, 4).unwrap();
        prop_assert_eq!(a.bounds().0 .1, b.bounds().0 .0);
        prop_assert_eq!(a.bounds().1, b.bounds().1);
        prop_assert!(a.signed_area() > 0.0);
    }
}
