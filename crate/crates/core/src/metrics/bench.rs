//! Wall-clock latency measurement for pipeline stages.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvFingerprint {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub crate_version: String,
    pub debug_assertions: bool,
}

impl EnvFingerprint {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            debug_assertions: cfg!(debug_assertions),
        }
    }
}

/// Timings in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub stage: String,
    pub repeats: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyReport {
    pub fn from_samples(stage: &str, warmup: usize, samples_ms: &[f64]) -> Self {
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if sorted.is_empty() { 0.0 } else { sorted.iter().sum::<f64>() / sorted.len() as f64 };
        Self {
            stage: stage.to_string(),
            repeats: sorted.len(),
            warmup,
            mean_ms: mean,
            p50_ms: percentile(&sorted, 50.0),
            p99_ms: percentile(&sorted, 99.0),
            min_ms: sorted.first().copied().unwrap_or(0.0),
            max_ms: sorted.last().copied().unwrap_or(0.0),
        }
    }
}

/// Nearest-rank percentile of ascending `sorted`; 0 when empty.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Runs `f` `warmup` times untimed, then `repeats` times timed.
pub fn latency_bench<F: FnMut()>(stage: &str, repeats: usize, warmup: usize, mut f: F) -> LatencyReport {
    for _ in 0..warmup {
        f();
    }
    let samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    LatencyReport::from_samples(stage, warmup, &samples)
}

/// Plain-text table: one row per stage plus a total of the means.
pub fn format_latency_table(reports: &[LatencyReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<24} {:>10} {:>10} {:>10}", "stage", "mean_ms", "p50_ms", "p99_ms");
    for r in reports {
        let _ = writeln!(s, "{:<24} {:>10.3} {:>10.3} {:>10.3}", r.stage, r.mean_ms, r.p50_ms, r.p99_ms);
    }
    let total: f64 = reports.iter().map(|r| r.mean_ms).sum();
    let _ = writeln!(s, "{:<24} {:>10.3}", "total", total);
    s
}
