//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Every check carries its own oracle and a wall-clock limit. The process
//! exits nonzero when any line fails.

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bevkit::geometry::{densify, from_spherical, to_spherical, DensifyConfig};
use bevkit::losses::{focal_loss, smooth_l1, total_loss, LossWeights};
use bevkit::metrics::ap::parse_ground_truth;
use bevkit::metrics::{average_precision, rotated_iou, ApOptions, RotatedBox, ScoredBox};
use bevkit::heads::parse_detections;
use bevkit::pointcloud::write_cloud;
use bevkit::raster::{rasterize, BevConfig, BevGrid};
use bevkit::sampler::{build_epoch_plan, remap_index, AugmentationSchedule, DatasetSpec, Role};
use bevkit::swag::gradcheck::{check_instance, Instance, InstanceShape};
use bevkit::swag::{naive_concat_baseline, swag_forward, SwagDims, SwagParams};
use bevkit::PointCloud;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(d) if elapsed <= limit => (true, d),
        Ok(d) => (false, format!("{d}; over time limit")),
        Err(e) => (false, e),
    };
    println!(
        "{} {name} [{:.2} s / {:.0} s] {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    pass
}

fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn geometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut cloud = PointCloud::with_capacity(10_000);
    while cloud.len() < 10_000 {
        let d = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0f64)];
        let n = norm(d);
        if !(0.1..=1.0).contains(&n) {
            continue;
        }
        let r = rng.gen_range(0.5..=80.0);
        cloud.push(d.map(|v| v / n * r), rng.gen_range(0.0..=1.0));
    }
    let mut worst = 0.0f64;
    for (i, s) in to_spherical(&cloud).map_err(|e| e.to_string())?.iter().enumerate() {
        let (a, b) = (from_spherical(s), cloud.point(i));
        worst = worst.max(norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]]) / norm(b));
    }
    ensure(worst < 1e-9, || format!("round trip rel error {worst:e}"))?;

    let zero = DensifyConfig { delta_r_min: 0.0, delta_r_max: 0.0, copies_per_point: 2, seed: 5 };
    let (same, _) = densify(&cloud, &zero).map_err(|e| e.to_string())?;
    let n = cloud.len();
    for i in 0..n {
        ensure(same.point(i) == cloud.point(i), || format!("source point {i} changed"))?;
        for k in 0..2 {
            let j = n + i * 2 + k;
            ensure(same.point(j) == cloud.point(i) && same.intensity[j] == cloud.intensity[i], || {
                format!("Δr = 0 copy {k} of point {i} differs")
            })?;
        }
    }

    let (dense, _) = densify(&cloud, &DensifyConfig { seed: 6, ..DensifyConfig::default() }).map_err(|e| e.to_string())?;
    let copies = DensifyConfig::default().copies_per_point;
    ensure(dense.len() == n * (1 + copies), || format!("densified count {}", dense.len()))?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        for k in 0..copies {
            let dr = norm(dense.point(n + i * copies + k)) - norm(cloud.point(i));
            lo = lo.min(dr);
            hi = hi.max(dr);
        }
    }
    ensure(lo >= 0.1 - 1e-9 && hi <= 0.3 + 1e-9, || format!("range deltas span [{lo}, {hi}]"))?;
    Ok(format!("round trip {worst:.1e}; Δr=0 exact; deltas in [{lo:.4}, {hi:.4}]"))
}

fn raster_oracle() -> Check {
    let cfg = BevConfig { x_min: 0.0, x_max: 8.0, y_min: -4.0, y_max: 4.0, ..BevConfig::default() };
    let (h, w) = (cfg.height(), cfg.width());
    ensure((h, w) == (64, 64), || format!("fuzz grid is {h}x{w}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_mean = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(0..=10_000);
        let mut cloud = PointCloud::with_capacity(n);
        for _ in 0..n {
            let x = if rng.gen_bool(0.1) { rng.gen_range(0..70) as f64 * 0.125 } else { rng.gen_range(-1.0..9.0) };
            let y = if rng.gen_bool(0.1) { rng.gen_range(-36..36) as f64 * 0.125 } else { rng.gen_range(-5.0..5.0) };
            cloud.push([x, y, rng.gen_range(-5.0..5.0)], rng.gen_range(0.0..=1.0));
        }
        // (count, max z, intensity sum) per occupied cell.
        let mut cells: HashMap<(i64, i64), (u32, f64, f64)> = HashMap::new();
        for i in 0..n {
            let u = ((cloud.x[i] - cfg.x_min) / cfg.res_x).floor() as i64;
            let v = ((cloud.y[i] - cfg.y_min) / cfg.res_y).floor() as i64;
            if u < 0 || v < 0 || u >= h as i64 || v >= w as i64 {
                continue;
            }
            let z = cloud.z[i].max(cfg.z_min).min(cfg.z_max);
            let e = cells.entry((u, v)).or_insert((0, f64::NEG_INFINITY, 0.0));
            e.0 += 1;
            e.1 = e.1.max(z);
            e.2 += cloud.intensity[i];
        }
        let grid = rasterize(&cloud, &cfg).map_err(|e| e.to_string())?;
        let cap = cfg.density_cap as f64;
        for u in 0..h {
            for v in 0..w {
                let got = [grid.get(u, v, 0), grid.get(u, v, 1), grid.get(u, v, 2), grid.get(u, v, 3)];
                match cells.get(&(u as i64, v as i64)) {
                    None => ensure(got == [0.0; 4], || format!("case {case}: empty cell ({u},{v}) = {got:?}"))?,
                    Some(&(cnt, max_z, sum)) => {
                        ensure(got[0] == max_z as f32 && got[3] == 1.0, || format!("case {case}: cell ({u},{v}) max/occupancy"))?;
                        let mean_err = (got[1] as f64 - sum / cnt as f64).abs();
                        let dens_err = (got[2] as f64 - (1.0 + (cnt as f64).min(cap)).ln() / (1.0 + cap).ln()).abs();
                        worst_mean = worst_mean.max(mean_err).max(dens_err);
                    }
                }
            }
        }
    }
    ensure(worst_mean <= 1e-6, || format!("mean channel error {worst_mean:e}"))?;
    let d = BevConfig::default();
    ensure((d.height(), d.width(), d.channels.len()) == (480, 480, 4), || "default grid is not 480x480x4".into())?;
    Ok(format!("100 clouds exact on max/occupancy, mean error {worst_mean:.1e}; default 480x480x4"))
}

fn sampler() -> Check {
    let lens = [9400u64, 9560, 4719];
    let specs = vec![
        DatasetSpec::new("detection", lens[0], Role::Detection),
        DatasetSpec::new("semantic", lens[1], Role::Semantic),
        DatasetSpec::new("motion", lens[2], Role::Motion),
    ];
    let plan = build_epoch_plan(&specs, 0, &AugmentationSchedule::default(), 7).map_err(|e| e.to_string())?;
    let n = *lens.iter().max().unwrap();
    ensure(plan.rows.len() as u64 == n, || format!("{} rows", plan.rows.len()))?;
    let cols: [Vec<u64>; 3] = [
        plan.rows.iter().map(|r| r.detection_idx).collect(),
        plan.rows.iter().map(|r| r.semantic_idx).collect(),
        plan.rows.iter().map(|r| r.motion_idx).collect(),
    ];
    for (len, col) in lens.iter().zip(&cols) {
        let mut counts = vec![0u64; *len as usize];
        for &i in col {
            counts[i as usize] += 1;
        }
        let (lo, hi) = (n / len, n.div_ceil(*len));
        ensure(counts.iter().all(|&c| c == lo || c == hi), || format!("length {len}: visits outside {{{lo}, {hi}}}"))?;
        if *len == n {
            ensure(counts.iter().all(|&c| c == 1), || "longest dataset not visited exactly once".into())?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..1_000_000 {
        let len = rng.gen_range(1..=u32::MAX as u64);
        let idx = rng.gen::<u64>() >> rng.gen_range(0..48);
        let got = remap_index(idx, &DatasetSpec::new("x", len, Role::Motion));
        ensure(got == idx % len, || format!("remap({idx}, {len}) = {got}"))?;
    }
    Ok("floor/ceil visit counts hold; 1e6 remap pairs match modulo".into())
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straight loops over plain indices; returns the fused map in `[od ‖ w·sem]` order.
fn swag_reference(f_sem: &Array3<f64>, f_od: &Array3<f64>, p: &SwagParams<f64>) -> Vec<f64> {
    let (h, w, c) = f_sem.dim();
    let d = f_od.dim().2;
    let k = p.w_sem.nrows();
    let mut acc = vec![0.0; c];
    for i in 0..h {
        for j in 0..w {
            let m: Vec<f64> = (0..k)
                .map(|kk| {
                    let a = p.b_sem[kk] + (0..c).map(|cc| p.w_sem[[kk, cc]] * f_sem[[i, j, cc]]).sum::<f64>();
                    let b = p.b_od[kk] + (0..d).map(|dd| p.w_od[[kk, dd]] * f_od[[i, j, dd]]).sum::<f64>();
                    sig(b) * sig(a)
                })
                .collect();
            for cc in 0..c {
                let q: f64 = (0..k).map(|kk| p.conv[[cc, kk]] * m[kk]).sum();
                acc[cc] += p.bn_gamma[cc] * (q - p.bn_mean[cc]) / (p.bn_var[cc] + p.bn_eps).sqrt() + p.bn_beta[cc];
            }
        }
    }
    let weights: Vec<f64> = acc.iter().map(|a| sig(a / (h * w) as f64)).collect();
    let mut fused = Vec::with_capacity(h * w * (c + d));
    for i in 0..h {
        for j in 0..w {
            fused.extend((0..d).map(|dd| f_od[[i, j, dd]]));
            fused.extend((0..c).map(|cc| weights[cc] * f_sem[[i, j, cc]]));
        }
    }
    fused
}

fn swag() -> Check {
    let fixed = InstanceShape { height: 4, width: 4, dims: SwagDims { c_sem: 3, d_od: 3, k: 2 } };
    let shape = |seed: u64| if seed % 2 == 0 { fixed } else { InstanceShape::random(seed, 8) };
    let mut fwd = 0.0f64;
    let mut grad = 0.0f64;
    for seed in 0..100u64 {
        let inst = Instance::random(shape(seed), seed + 1000);
        let out = swag_forward(&inst.f_sem, &inst.f_od, &inst.params).map_err(|e| e.to_string())?;
        let reference = swag_reference(&inst.f_sem.data, &inst.f_od.data, &inst.params);
        ensure(out.fused.len() == reference.len(), || format!("seed {seed}: fused size"))?;
        for (a, b) in out.fused.iter().zip(&reference) {
            fwd = fwd.max((a - b).abs() / b.abs().max(1.0));
        }
        let report = check_instance(&inst, 1e-5).map_err(|e| e.to_string())?;
        grad = grad.max(report.max_error);
    }
    ensure(fwd <= 1e-12, || format!("forward error {fwd:e}"))?;
    ensure(grad <= 1e-5, || format!("gradient error {grad:e}"))?;
    for seed in 0..10 {
        let mut inst = Instance::random(InstanceShape::random(seed, 8), seed);
        inst.params.bn_gamma.fill(0.0);
        inst.params.bn_beta.fill(40.0);
        let out = swag_forward(&inst.f_sem, &inst.f_od, &inst.params).map_err(|e| e.to_string())?;
        let concat = naive_concat_baseline(&inst.f_sem, &inst.f_od).map_err(|e| e.to_string())?;
        ensure(out.fused == concat, || format!("seed {seed}: open gate differs from concatenation"))?;
    }
    Ok(format!("forward {fwd:.1e}, gradients {grad:.1e}, open gate exact"))
}

fn losses() -> Check {
    let mut worst = 0.0f64;
    for k in 1..=10_000 {
        let p = k as f64 / 10_000.0;
        worst = worst.max((focal_loss(p, 0.0).map_err(|e| e.to_string())? + p.ln()).abs());
    }
    ensure(worst < 1e-12, || format!("focal vs -ln p {worst:e}"))?;
    let mut gap = 0.0f64;
    for beta in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0] {
        for sign in [1.0, -1.0] {
            let below = smooth_l1(sign * beta * (1.0 - 1e-12), 0.0, beta);
            let above = smooth_l1(sign * beta * (1.0 + 1e-12), 0.0, beta);
            gap = gap.max((below - above).abs());
        }
    }
    ensure(gap < 1e-9, || format!("smooth-L1 gap {gap:e}"))?;
    let total = total_loss(&[1.0; 5], &LossWeights::in_task_order());
    ensure((total - 4.48).abs() < 1e-12, || format!("all-ones total {total}"))?;
    Ok(format!("focal {worst:.1e}, knee gap {gap:.1e}, total {total}"))
}

fn fixture(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ap_toy").join(name);
    fs::read_to_string(path).expect("fixture present")
}

fn metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let mut draw = || {
            let yaw = [0.0, 90.0][rng.gen_range(0..2)];
            (rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(0.5..4.0), rng.gen_range(0.5..6.0), yaw)
        };
        let (a, b) = (draw(), draw());
        // Axis extents: length lies along x at 0°, along y at 90°.
        let ext = |(cx, cy, w, l, yaw): (f64, f64, f64, f64, f64)| {
            let (ex, ey) = if yaw == 0.0 { (l, w) } else { (w, l) };
            (cx - ex / 2.0, cx + ex / 2.0, cy - ey / 2.0, cy + ey / 2.0)
        };
        let (ea, eb) = (ext(a), ext(b));
        let ix = (ea.1.min(eb.1) - ea.0.max(eb.0)).max(0.0);
        let iy = (ea.3.min(eb.3) - ea.2.max(eb.2)).max(0.0);
        let closed = ix * iy / (a.2 * a.3 + b.2 * b.3 - ix * iy);
        let got = rotated_iou(&RotatedBox::new(a.0, a.1, a.2, a.3, a.4), &RotatedBox::new(b.0, b.1, b.2, b.3, b.4))
            .map_err(|e| e.to_string())?;
        worst = worst.max((got - closed).abs());
    }
    ensure(worst < 1e-12, || format!("axis-aligned error {worst:e}"))?;
    let third = rotated_iou(&RotatedBox::new(0.0, 0.0, 1.0, 1.0, 0.0), &RotatedBox::new(0.5, 0.0, 1.0, 1.0, 0.0))
        .map_err(|e| e.to_string())?;
    ensure((third - 1.0 / 3.0).abs() < 1e-9, || format!("offset squares {third}"))?;

    let dets: Vec<ScoredBox> = parse_detections(&fixture("dets.txt")).map_err(|e| e.to_string())?.iter().map(ScoredBox::from).collect();
    let gts = parse_ground_truth(&fixture("gt.txt")).map_err(|e| e.to_string())?;
    let ap = average_precision(&dets, &gts, &ApOptions::default()).map_err(|e| e.to_string())?.ap;
    // Precision after each rank: 0, 1/2, 1/3, 2/4, 3/5, 3/6, 4/7 over 5 ground truths;
    // recall reaches 0.2, 0.4, 0.6, 0.8 at ranks 2, 4, 5, 7. The right envelope is
    // 3/5 up to recall 0.6 and 4/7 up to 0.8; recall 0.825 and above scores 0.
    let hand: f64 = (24.0 * (3.0 / 5.0) + 8.0 * (4.0 / 7.0)) / 40.0;
    ensure((ap - 83.0 / 175.0).abs() < 1e-9 && (hand - 83.0 / 175.0).abs() < 1e-12, || format!("fixture AP {ap}"))?;

    for map in [|s: f64| 3.0 * s + 1.0, |s: f64| s.powi(3), |s: f64| s.exp() - 5.0, |s: f64| (s + 2.0).ln()] {
        let mapped: Vec<ScoredBox> = dets.iter().map(|d| ScoredBox { score: map(d.score), ..*d }).collect();
        let again = average_precision(&mapped, &gts, &ApOptions::default()).map_err(|e| e.to_string())?.ap;
        ensure(again == ap, || format!("monotone map changed AP to {again}"))?;
    }
    Ok(format!("axis-aligned {worst:.1e}, offset squares {third:.12}, fixture AP {ap:.12}"))
}

fn performance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cloud = PointCloud::with_capacity(125_000);
    for _ in 0..125_000 {
        cloud.push([rng.gen_range(-5.0..65.0), rng.gen_range(-35.0..35.0), rng.gen_range(-4.0..4.0)], rng.gen_range(0.0..1.0));
    }
    let cfg = BevConfig::default();
    for _ in 0..10 {
        std::hint::black_box(rasterize(&cloud, &cfg).map_err(|e| e.to_string())?);
    }
    let start = Instant::now();
    for _ in 0..100 {
        std::hint::black_box(rasterize(&cloud, &cfg).map_err(|e| e.to_string())?);
    }
    let mean_ms = start.elapsed().as_secs_f64() * 10.0;
    let grid = rasterize(&cloud, &cfg).map_err(|e| e.to_string())?;
    ensure(grid.shape() == (480, 480, 4), || format!("shape {:?}", grid.shape()))?;
    ensure(mean_ms < 15.0, || format!("mean {mean_ms:.3} ms"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = dir.path().join("bench.json");
    let o = bevkit(&["bench", "--repeats", "3", "--warmup", "1", "--points", "5000", "--out", s(&report)])?;
    let table = String::from_utf8_lossy(&o);
    let header: Vec<&str> = table.lines().next().unwrap_or("").split_whitespace().collect();
    ensure(header == ["stage", "mean_ms", "p50_ms", "p99_ms"], || format!("table header {header:?}"))?;
    for row in ["rasterize", "densify", "swag_forward", "decode", "total", "end_to_end"] {
        ensure(table.lines().any(|l| l.starts_with(row)), || format!("table lacks {row}"))?;
    }
    let json: Value = serde_json::from_slice(&fs::read(&report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    for key in ["mean_ms", "p50_ms", "p99_ms"] {
        ensure(json["stages"][0][key].is_f64(), || format!("report lacks {key}"))?;
    }
    Ok(format!("rasterize 125k points mean {mean_ms:.3} ms single thread; bench report well formed"))
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Runs the CLI; returns stdout on exit 0.
fn bevkit(args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_bevkit")).args(args).output().map_err(|e| e.to_string())?;
    match o.status.code() {
        Some(0) => Ok(o.stdout),
        c => Err(format!("bevkit {args:?} exited {c:?}: {}", String::from_utf8_lossy(&o.stderr))),
    }
}

/// Every file under `dir`, sorted by name, with contents.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map(|it| it.map(|e| e.unwrap().path()).map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())).collect())
        .unwrap_or_default();
    v.sort();
    v
}

/// Bench timings are wall-clock samples; everything else in the report must repeat.
fn without_timings(report: &[u8]) -> Result<Value, String> {
    let mut v: Value = serde_json::from_slice(report).map_err(|e| e.to_string())?;
    for stage in v["stages"].as_array_mut().ok_or("no stages")? {
        for key in ["mean_ms", "p50_ms", "p99_ms", "min_ms", "max_ms"] {
            stage[key] = Value::Null;
        }
    }
    Ok(v)
}

fn determinism() -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = work.path().join("clouds");
    fs::create_dir(&input).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for f in 0..4 {
        let mut c = PointCloud::with_capacity(3000);
        for _ in 0..3000 {
            c.push([rng.gen_range(0.0..60.0), rng.gen_range(-30.0..30.0), rng.gen_range(-2.0..2.0)], rng.gen_range(0.0..1.0));
        }
        write_cloud(input.join(format!("{f:06}.bin")), &c).map_err(|e| e.to_string())?;
    }
    let mut labels = BevGrid::zeros(16, 16, 1);
    labels.data.iter_mut().for_each(|v| *v = rng.gen_range(0..4) as f32);
    let seg = work.path().join("seg.bevg");
    labels.write(&seg).map_err(|e| e.to_string())?;
    let (dets, gt) = (work.path().join("dets.txt"), work.path().join("gt.txt"));
    fs::write(&dets, fixture("dets.txt")).map_err(|e| e.to_string())?;
    fs::write(&gt, fixture("gt.txt")).map_err(|e| e.to_string())?;

    let mut checked = Vec::new();
    for cmd in ["rasterize", "densify"] {
        let mut runs = Vec::new();
        for (k, jobs) in ["1", "4"].iter().enumerate() {
            let out = work.path().join(format!("{cmd}{k}"));
            bevkit(&["--seed", "11", "--jobs", jobs, cmd, "--input", s(&input), "--out", s(&out)])?;
            runs.push(snapshot(&out));
        }
        ensure(runs[0] == runs[1] && runs[0].len() == 5, || format!("{cmd} outputs differ"))?;
        checked.push(cmd);
    }
    let plans: Vec<_> = (0..2)
        .map(|k| {
            let out = work.path().join(format!("plan{k}")).join("epoch3.txt");
            bevkit(&["--seed", "11", "plan-epoch", "--epoch", "3", "--out", s(&out)])?;
            Ok(snapshot(out.parent().unwrap()))
        })
        .collect::<Result<_, String>>()?;
    ensure(plans[0] == plans[1], || "plan-epoch outputs differ".into())?;
    checked.push("plan-epoch");

    let stdout_commands: [(&str, Vec<&str>); 3] = [
        ("swag-check", vec!["--seed", "11", "swag-check", "--instances", "20"]),
        ("eval ap", vec!["eval", "ap", "--dets", s(&dets), "--gt", s(&gt)]),
        ("eval seg-iou", vec!["eval", "seg-iou", "--pred", s(&seg), "--gt", s(&seg)]),
    ];
    for (name, args) in &stdout_commands {
        ensure(bevkit(args)? == bevkit(args)?, || format!("{name} reports differ"))?;
        checked.push(name);
    }
    let bench = ["--seed", "11", "bench", "--repeats", "2", "--warmup", "0", "--points", "2000"];
    let reports: Vec<Value> = (0..2)
        .map(|k| {
            let out = work.path().join(format!("bench{k}.json"));
            let mut args = bench.to_vec();
            args.extend(["--out", s(&out)]);
            bevkit(&args)?;
            without_timings(&fs::read(&out).map_err(|e| e.to_string())?)
        })
        .collect::<Result<_, String>>()?;
    ensure(reports[0] == reports[1], || "bench reports differ outside timings".into())?;
    checked.push("bench (timings excluded)");
    Ok(format!("identical across two runs: {}", checked.join(", ")))
}

fn main() {
    let checks: [(&str, u64, fn() -> Check); 8] = [
        ("geometry_round_trip", 5, geometry),
        ("bev_oracle_equivalence", 30, raster_oracle),
        ("sampler_arithmetic", 5, sampler),
        ("swag_verification", 60, swag),
        ("loss_formulas", 1, losses),
        ("metrics_oracle", 5, metrics),
        ("rasterize_performance", 60, performance),
        ("cli_determinism", 120, determinism),
    ];
    let mut failed = 0;
    for (name, limit, f) in checks {
        if !run(name, Duration::from_secs(limit), f) {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
