use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};
use terragan::checkpoint::{load_progan, load_translation, save_progan, save_translation};
use terragan::gan::{sample_noise, write_history_csv, TensorDataset};
use terragan::geodata::{
    build_dataset, compute_stats, fixture, load_dataset, load_raster, save_dataset, tile_raster, write_gray_png,
    write_rgb_png, BuildOptions, DatasetStats, GeoPolygon, HttpImageryClient, ImageryClient, Manifest, MockFsClient,
    RasterFormat, TilePair,
};
use terragan::ops::down2_average;
use terragan::pix2pix::{mean_l1, train_translation, translate, Direction, PairedDataset, TranslationModel};
use terragan::progan::{fade_state, make_schedule, train_progressive, ProGan};
use terragan::terrain::{
    build_mesh, colorize_perlin, export_mesh, interpolate_latents, perlin_heightfield, HeightField, MeshFormat,
};
use terragan::verify::check_all;
use terragan::{Error, Result, Rng, Tensor};

use crate::report::Run;

// Substream labels; each command draws from its own stream of the run seed.
const INIT_STREAM: u64 = 0x1417;
const LATENT_STREAM: u64 = 0x2a7e;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn mesh_extension(format: MeshFormat) -> &'static str {
    match format {
        MeshFormat::PlyAscii => "ply",
        MeshFormat::Obj => "obj",
    }
}

/// Average-pool a `[C, N, N]` tile down to `[C, r, r]`.
fn downsample(tile: &Tensor, r: usize) -> Result<Tensor> {
    let [c, n, _] = match tile.shape() {
        &[c, h, w] if h == w => [c, h, w],
        other => return Err(Error::Shape(format!("expected a square [C, N, N] tile, got {other:?}"))),
    };
    if r == 0 || n % r != 0 || !(n / r).is_power_of_two() {
        return Err(Error::Config(format!("cannot reduce {n}x{n} tiles to {r}x{r} by halving")));
    }
    let mut x = tile.reshape(&[1, c, n, n])?;
    while x.shape()[2] > r {
        x = down2_average(&x)?;
    }
    x.reshape(&[c, r, r])
}

fn load_pairs(run: &mut Run, resolution: usize) -> Result<Vec<TilePair>> {
    let path = run.config.required(&run.config.dataset, "dataset")?.to_path_buf();
    run.input(&path)?;
    let (_, pairs) = load_dataset(&path)?;
    if pairs.is_empty() {
        return Err(Error::EmptyData(format!("{} holds no tile pairs", path.display())));
    }
    pairs
        .into_iter()
        .map(|p| {
            Ok(TilePair {
                dem: downsample(&p.dem, resolution)?,
                rgb: downsample(&p.rgb, resolution)?,
                ..p
            })
        })
        .collect()
}

pub fn build(mut run: Run) -> Result<Value> {
    let dem_path = run.config.dem_path()?;
    run.input(&dem_path)?;
    let raster = load_raster(&dem_path, RasterFormat::from_path(&dem_path))?;
    let client: Box<dyn ImageryClient> = match run.config.imagery {
        crate::config::ImagerySource::Mock => {
            Box::new(MockFsClient::new(run.config.fixture_dir()?.join(fixture::IMAGERY_DIR)))
        }
        crate::config::ImagerySource::Http => Box::new(HttpImageryClient {
            endpoint: run.config.imagery_endpoint.clone(),
        }),
    };
    let options = BuildOptions {
        tile_size: run.config.tile_size,
        retries: run.config.retries,
    };
    let out = run.out("dataset.tfds");
    let manifest = build_dataset(&[raster], client.as_ref(), &options, &out)?;
    run.output(&out)?;
    let summary = serde_json::to_value(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    run.finish(summary.clone())?;
    Ok(summary)
}

pub fn stats(mut run: Run) -> Result<Value> {
    let dem_path = run.config.dem_path()?;
    run.input(&dem_path)?;
    let raster = load_raster(&dem_path, RasterFormat::from_path(&dem_path))?;
    let tiling = tile_raster(&raster, run.config.tile_size)?;
    let stats = DatasetStats {
        tile_count: tiling.tiles.len(),
        ..compute_stats(std::slice::from_ref(&raster))?
    };
    let summary = json!({
        "width": raster.width,
        "height": raster.height,
        "stats": stats,
        "dropped_nodata": tiling.dropped_nodata.len(),
        "warning": tiling.warning,
    });
    run.finish(summary.clone())?;
    Ok(summary)
}

/// Item `k` of a batch without the batch axis.
fn item(batch: &Tensor, k: usize) -> Result<Tensor> {
    let t = batch.batch_item(k)?;
    t.reshape(&t.shape()[1..])
}

fn write_sample(model: &ProGan, z: &Tensor, path: &Path) -> Result<()> {
    let image = model.generate(z)?;
    write_rgb_png(&item(&image, 0)?, path)
}

pub fn train_progan(mut run: Run) -> Result<Value> {
    let cfg = run.config.clone();
    let model_config = cfg.progan()?;
    let tiles = load_pairs(&mut run, cfg.target_resolution)?;
    let mut dataset = TensorDataset::new(tiles.into_iter().map(|p| p.rgb).collect())?;
    let schedule = make_schedule(cfg.target_resolution, cfg.iterations_per_stage, cfg.fade_fraction)?;
    let train = cfg.train(cfg.iterations_per_stage);
    let z = sample_noise(
        &terragan::gan::NoiseSpec::new(cfg.latent_dim, cfg.noise)?,
        1,
        &mut Rng::new(cfg.seed).derive(LATENT_STREAM),
    )?;
    let mut samples = Vec::new();
    let (model, stages) = train_progressive(
        &schedule,
        &mut dataset,
        &model_config,
        &train,
        &mut Rng::new(cfg.seed),
        &mut |stage, m| {
            let path = cfg.out.join(format!("stage_{stage}_{}.png", m.generator.resolution()));
            write_sample(m, &z, &path)?;
            log::info!("stage {stage} done, sample at {}", path.display());
            samples.push(path);
            Ok(())
        },
    )?;
    for path in &samples {
        run.output(path)?;
    }
    let ckpt = run.out("progan.ckpt");
    save_progan(&ckpt, &model, &model_config)?;
    run.output(&ckpt)?;
    let csv = run.out("progan_history.csv");
    {
        let mut w = create(&csv)?;
        let mut first = 0;
        for s in &stages {
            write_history_csv(&s.history, first, &mut w).map_err(|e| Error::io(&csv, e))?;
            first += s.history.len();
        }
        w.flush().map_err(|e| Error::io(&csv, e))?;
    }
    run.output(&csv)?;
    let state = fade_state(&model);
    let summary = json!({
        "stages": stages.iter().map(|s| json!({
            "resolution": s.resolution,
            "fade_iterations": s.fade_iterations,
            "final": s.history.last(),
        })).collect::<Vec<_>>(),
        "stage_index": state.stage_index,
        "alpha": state.alpha,
    });
    run.finish(summary.clone())?;
    Ok(summary)
}

pub fn train_pix2pix(mut run: Run) -> Result<Value> {
    let cfg = run.config.clone();
    let config = cfg.translation()?;
    let tiles = load_pairs(&mut run, cfg.resolution)?;
    let pairs: Vec<(Tensor, Tensor)> = tiles
        .into_iter()
        .map(|p| match cfg.direction {
            Direction::RgbToDem => (p.rgb, p.dem),
            Direction::DemToRgb => (p.dem, p.rgb),
        })
        .collect();
    let mut dataset = PairedDataset::new(pairs)?;
    let mut model = TranslationModel::new(&config, &mut Rng::new(cfg.seed).derive(INIT_STREAM))?;
    let history = train_translation(&mut model, &mut dataset, &cfg.train(cfg.iterations), &mut Rng::new(cfg.seed))?;
    let (inputs, targets) = dataset.stacked()?;
    let train_l1 = mean_l1(&model, &inputs, &targets)?;

    let ckpt = run.out(&format!("{}.ckpt", cfg.direction));
    save_translation(&ckpt, &model, &config)?;
    run.output(&ckpt)?;
    let csv = run.out(&format!("{}_history.csv", cfg.direction));
    {
        let mut w = create(&csv)?;
        let io = |e| Error::io(&csv, e);
        writeln!(w, "iteration,d_loss,g_loss,adversarial,l1_term").map_err(io)?;
        for (i, h) in history.iter().enumerate() {
            writeln!(w, "{i},{},{},{},{}", h.d_loss, h.g_loss, h.adversarial, h.l1_term).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    run.output(&csv)?;
    let summary = json!({
        "direction": cfg.direction,
        "pairs": dataset.len(),
        "final": history.last(),
        "train_mean_l1": train_l1,
    });
    run.finish(summary.clone())?;
    Ok(summary)
}

fn load_forward(run: &mut Run) -> Result<TranslationModel> {
    let path = run.config.required(&run.config.translation_checkpoint, "translation_checkpoint")?.to_path_buf();
    run.input(&path)?;
    let (model, _) = load_translation(&path)?;
    if model.direction != Direction::RgbToDem {
        return Err(Error::Config(format!(
            "translation_checkpoint must be an rgb_to_dem model, got {}",
            model.direction
        )));
    }
    Ok(model)
}

fn load_generator(run: &mut Run) -> Result<ProGan> {
    let path = run.config.required(&run.config.progan_checkpoint, "progan_checkpoint")?.to_path_buf();
    run.input(&path)?;
    Ok(load_progan(&path)?.0)
}

/// Placeholder footprint for generated tiles, which have no location: unit
/// squares laid out along the equator.
fn synthetic_footprint(k: usize) -> Result<GeoPolygon> {
    let x = k as f64;
    GeoPolygon::new(vec![[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0], [x, 0.0]])
}

fn write_mesh(run: &mut Run, dem: &Tensor, rgb: &Tensor, stem: &str) -> Result<()> {
    let field = HeightField::new(dem.clone())?;
    let mesh = build_mesh(&field, rgb, run.config.vertical_scale)?;
    let path = run.out(&format!("{stem}.{}", mesh_extension(run.config.mesh_format)));
    export_mesh(&mesh, &path, run.config.mesh_format)?;
    run.output(&path)
}

pub fn generate(mut run: Run) -> Result<Value> {
    let progan = load_generator(&mut run)?;
    let forward = load_forward(&mut run)?;
    let r = progan.generator.resolution();
    if r != forward.resolution() {
        return Err(Error::Config(format!(
            "the ProGAN generates {r}x{r} tiles but the translation model expects {}",
            forward.resolution()
        )));
    }
    let count = run.config.count.max(1);
    let z = sample_noise(&progan.noise, count, &mut Rng::new(run.config.seed).derive(LATENT_STREAM))?;
    let rgb = progan.generate(&z)?;
    let dem = translate(&forward, &rgb)?;
    let mut pairs = Vec::with_capacity(count);
    for k in 0..count {
        let (rgb_k, dem_k) = (item(&rgb, k)?, item(&dem, k)?);
        let stem = format!("tile_{k:03}");
        let (rgb_path, dem_path) = (run.out(&format!("{stem}_rgb.png")), run.out(&format!("{stem}_dem.png")));
        write_rgb_png(&rgb_k, &rgb_path)?;
        write_gray_png(&dem_k, &dem_path)?;
        run.output(&rgb_path)?;
        run.output(&dem_path)?;
        write_mesh(&mut run, &dem_k, &rgb_k, &stem)?;
        pairs.push(TilePair {
            dem: dem_k,
            rgb: rgb_k,
            footprint: synthetic_footprint(k)?,
            raster: 0,
            row: 0,
            col: k,
        });
    }
    // Generated elevations stay in normalized units.
    let mut manifest = Manifest {
        tile_size: r,
        stats: DatasetStats {
            global_min: -1.0,
            global_max: 1.0,
            tile_count: count,
        },
        tile_count: count,
        dropped_nodata: vec![],
        skipped: vec![],
        warnings: vec![],
        clamped: 0,
        content_digest: String::new(),
    };
    let tiles = run.out("tiles.tfds");
    save_dataset(&tiles, &mut manifest, &pairs)?;
    run.output(&tiles)?;
    let summary = json!({
        "resolution": r,
        "count": count,
        "content_digest": manifest.content_digest,
    });
    run.finish(summary.clone())?;
    Ok(summary)
}

pub fn perlin(mut run: Run) -> Result<Value> {
    let params = run.config.perlin();
    let field = perlin_heightfield(run.config.perlin_size, &params)?;
    let dem_path = run.out("perlin_dem.png");
    write_gray_png(field.values(), &dem_path)?;
    run.output(&dem_path)?;
    if run.config.colorize {
        let path = run.config.required(&run.config.inverse_checkpoint, "inverse_checkpoint")?.to_path_buf();
        run.input(&path)?;
        let (inverse, _) = load_translation(&path)?;
        let (dem, rgb) = colorize_perlin(&field, &inverse)?;
        let rgb_path = run.out("perlin_rgb.png");
        write_rgb_png(&rgb, &rgb_path)?;
        run.output(&rgb_path)?;
        write_mesh(&mut run, &dem, &rgb, "perlin")?;
    }
    let (lo, hi) = field.values().min_max();
    let summary = json!({ "size": field.size(), "params": params, "min": lo, "max": hi });
    run.finish(summary.clone())?;
    Ok(summary)
}

pub fn interpolate(mut run: Run) -> Result<Value> {
    let progan = load_generator(&mut run)?;
    let forward = match run.config.translation_checkpoint {
        Some(_) => Some(load_forward(&mut run)?),
        None => None,
    };
    let mut rng = Rng::new(run.config.seed).derive(LATENT_STREAM);
    let z0 = sample_noise(&progan.noise, 1, &mut rng)?;
    let z1 = sample_noise(&progan.noise, 1, &mut rng)?;
    let path = interpolate_latents(&z0, &z1, run.config.steps)?;
    for (k, z) in path.iter().enumerate() {
        let rgb = progan.generate(z)?;
        let file = run.out(&format!("frame_{k:03}_rgb.png"));
        write_rgb_png(&rgb, &file)?;
        run.output(&file)?;
        if let Some(model) = &forward {
            let dem = translate(model, &rgb)?;
            let file = run.out(&format!("frame_{k:03}_dem.png"));
            write_gray_png(&dem, &file)?;
            run.output(&file)?;
        }
    }
    let summary = json!({ "steps": path.len(), "resolution": progan.generator.resolution() });
    run.finish(summary.clone())?;
    Ok(summary)
}

pub fn export(mut run: Run) -> Result<Value> {
    let path = run.config.required(&run.config.dataset, "dataset")?.to_path_buf();
    run.input(&path)?;
    let (_, pairs) = load_dataset(&path)?;
    let index = run.config.tile_index;
    let pair = pairs.get(index).ok_or_else(|| {
        Error::Config(format!("tile_index {index} is out of range for {} pairs", pairs.len()))
    })?;
    let n = pair.dem.shape()[1];
    write_mesh(&mut run, &pair.dem, &pair.rgb, &format!("tile_{index:03}"))?;
    let summary = json!({
        "tile_index": index,
        "vertices": n * n,
        "triangles": 2 * (n - 1) * (n - 1),
        "footprint": pair.footprint.to_geojson(),
    });
    run.finish(summary.clone())?;
    Ok(summary)
}

pub fn grad_check(run: Run) -> Result<Value> {
    let (instances, seed) = (run.config.instances, run.config.seed);
    let single = check_all::<f32>(instances, seed)?;
    let double = check_all::<f64>(instances, seed)?;
    let failed: Vec<String> = single
        .iter()
        .map(|r| (r, "f32"))
        .chain(double.iter().map(|r| (r, "f64")))
        .filter(|(r, _)| !r.passed)
        .map(|(r, p)| format!("{}/{p}", r.op.name()))
        .collect();
    let summary = json!({ "f32": single, "f64": double, "failed": failed });
    run.finish(summary.clone())?;
    if !failed.is_empty() {
        return Err(Error::Contract(format!("gradient check failed for {}", failed.join(", "))));
    }
    Ok(summary)
}
