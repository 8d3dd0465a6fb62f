use std::path::Path;

use bevkit::geometry::densify;
use bevkit::heads::{assemble_detections, bin_count};
use bevkit::metrics::bench::format_latency_table;
use bevkit::metrics::{latency_bench, EnvFingerprint, LatencyReport};
use bevkit::raster::{rasterize, rasterize_parallel};
use bevkit::swag::{swag_forward, FeatureKind, SwagDims};
use bevkit::{FeatureMap, HeadRasters, PointCloud, SwagParams};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::emit_report;
use crate::config::RunConfig;
use crate::output::Provenance;
use crate::{CliError, Outcome, Stage};

/// Feature maps at a quarter of the BEV resolution.
const SWAG_DOWNSAMPLE: usize = 4;
const SWAG_CHANNELS: usize = 32;

#[derive(Debug, Serialize)]
struct Workload {
    seed: u64,
    points: usize,
    repeats: usize,
    warmup: usize,
    threads: usize,
    grid: (usize, usize, usize),
    swag_grid: (usize, usize),
    swag_dims: SwagDims,
    orientation_bins: usize,
}

#[derive(Debug, Serialize)]
struct Report {
    #[serde(flatten)]
    provenance: Provenance,
    environment: EnvFingerprint,
    workload: Workload,
    stages: Vec<LatencyReport>,
}

/// Points spread over a box slightly larger than the default BEV range.
pub fn synthetic_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = PointCloud::with_capacity(n);
    for _ in 0..n {
        let p = [rng.gen_range(-5.0..65.0), rng.gen_range(-35.0..35.0), rng.gen_range(-4.0..4.0)];
        cloud.push(p, rng.gen_range(0.0..1.0));
    }
    cloud
}

fn synthetic_heads(h: usize, w: usize, bins: usize, seed: u64) -> HeadRasters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = HeadRasters::zeros(h, w, bins);
    r.heatmap.iter_mut().for_each(|v| *v = rng.gen::<f32>().powi(8));
    r.orientation_logits.iter_mut().for_each(|v| *v = rng.gen_range(-4.0..4.0));
    r.dims.iter_mut().for_each(|v| *v = rng.gen_range(0.5..5.0));
    r
}

fn field(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> Array3<f32> {
    Array3::from_shape_simple_fn((h, w, c), || rng.gen_range(-1.0..1.0))
}

pub fn run(cfg: &RunConfig, stage: Stage, out: Option<&Path>) -> Result<Outcome, CliError> {
    let b = &cfg.bench;
    let threads = cfg.jobs.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;

    let cloud = synthetic_cloud(b.points, cfg.seed);
    let (h, w) = (cfg.bev.height(), cfg.bev.width());
    let bins = bin_count(cfg.decode.delta_theta).map_err(|e| CliError::Config(e.to_string()))?;
    let heads = synthetic_heads(h, w, bins, cfg.seed ^ 1);
    let (sh, sw) = (h.div_ceil(SWAG_DOWNSAMPLE), w.div_ceil(SWAG_DOWNSAMPLE));
    let dims = SwagDims { c_sem: SWAG_CHANNELS, d_od: SWAG_CHANNELS, k: SWAG_CHANNELS };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 2);
    let f_sem = FeatureMap::new(field(sh, sw, dims.c_sem, &mut rng), FeatureKind::Semantic);
    let f_od = FeatureMap::new(field(sh, sw, dims.d_od, &mut rng), FeatureKind::Detection);
    let params = SwagParams::<f64>::random(dims, cfg.seed ^ 3).to_f32();
    let densify_cfg = cfg.densify.to_config(cfg.seed);
    let d = &cfg.decode;

    let wants = |s: Stage| stage == s || stage == Stage::All;
    let stages: Vec<LatencyReport> = pool.install(|| {
        let mut v = Vec::new();
        if wants(Stage::Rasterize) {
            v.push(latency_bench("rasterize", b.repeats, b.warmup, || {
                std::hint::black_box(rasterize(&cloud, &cfg.bev).expect("valid config"));
            }));
        }
        if wants(Stage::RasterizeParallel) {
            v.push(latency_bench("rasterize_parallel", b.repeats, b.warmup, || {
                std::hint::black_box(rasterize_parallel(&cloud, &cfg.bev, threads).expect("valid config"));
            }));
        }
        if wants(Stage::Densify) {
            v.push(latency_bench("densify", b.repeats, b.warmup, || {
                std::hint::black_box(densify(&cloud, &densify_cfg).expect("valid config"));
            }));
        }
        if wants(Stage::SwagForward) {
            v.push(latency_bench("swag_forward", b.repeats, b.warmup, || {
                std::hint::black_box(swag_forward(&f_sem, &f_od, &params).expect("matching shapes"));
            }));
        }
        if wants(Stage::Decode) {
            v.push(latency_bench("decode", b.repeats, b.warmup, || {
                let out = assemble_detections(&heads, &cfg.bev, d.threshold, d.window, d.delta_theta, 0);
                std::hint::black_box(out.expect("matching shapes"));
            }));
        }
        if stage == Stage::All {
            v.push(latency_bench("end_to_end", b.repeats, b.warmup, || {
                std::hint::black_box(rasterize(&cloud, &cfg.bev).expect("valid config"));
                std::hint::black_box(swag_forward(&f_sem, &f_od, &params).expect("matching shapes"));
                let out = assemble_detections(&heads, &cfg.bev, d.threshold, d.window, d.delta_theta, 0);
                std::hint::black_box(out.expect("matching shapes"));
            }));
        }
        v
    });

    let (separate, fused): (Vec<_>, Vec<_>) = stages.iter().cloned().partition(|r| r.stage != "end_to_end");
    print!("{}", format_latency_table(&separate));
    for r in &fused {
        println!("{:<24} {:>10.3} {:>10.3} {:>10.3}", r.stage, r.mean_ms, r.p50_ms, r.p99_ms);
    }

    let report = Report {
        provenance: Provenance::new("bench", cfg.hash()),
        environment: EnvFingerprint::current(),
        workload: Workload {
            seed: cfg.seed,
            points: b.points,
            repeats: b.repeats,
            warmup: b.warmup,
            threads,
            grid: (h, w, cfg.bev.channels.len()),
            swag_grid: (sh, sw),
            swag_dims: dims,
            orientation_bins: bins,
        },
        stages,
    };
    if out.is_some() {
        emit_report(&report, out)?;
    }
    Ok(Outcome::Success)
}
