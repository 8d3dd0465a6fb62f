use std::path::{Path, PathBuf};

use bevkit::sampler::{build_epoch_plan, DatasetSpec};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{sha256_hex, to_json, write_atomic, Provenance};
use crate::{CliError, Outcome};

#[derive(Debug, Serialize)]
struct PlanManifest<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    epoch: u32,
    seed: u64,
    rows: usize,
    datasets: &'a [DatasetSpec],
    plan_sha256: String,
}

/// Sidecar path: `<plan>.manifest.json`.
fn manifest_path(plan: &Path) -> PathBuf {
    let mut name = plan.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    plan.with_file_name(name)
}

pub fn run(cfg: &RunConfig, epoch: u32, out: Option<&Path>) -> Result<Outcome, CliError> {
    let out = out.ok_or_else(|| CliError::Config("--out <FILE> is required".into()))?;
    if out.is_dir() {
        return Err(CliError::Config(format!("{} is a directory", out.display())));
    }
    let plan = build_epoch_plan(&cfg.sampler.datasets, epoch, &cfg.sampler.schedule, cfg.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let text = plan.to_text();
    write_atomic(out, text.as_bytes())?;
    let manifest = PlanManifest {
        provenance: Provenance::new("plan-epoch", cfg.hash()),
        epoch,
        seed: cfg.seed,
        rows: plan.rows.len(),
        datasets: &cfg.sampler.datasets,
        plan_sha256: sha256_hex(text.as_bytes()),
    };
    write_atomic(&manifest_path(out), &to_json(&manifest))?;
    Ok(Outcome::Success)
}
