use std::path::Path;

use bevkit::pointcloud::read_cloud;
use bevkit::raster::rasterize_with_stats;
use rayon::prelude::*;
use serde::Serialize;

use super::{pool, require_input_dir, require_out_dir};
use crate::config::RunConfig;
use crate::output::{file_name, file_stem, list_inputs, sha256_hex, to_json, write_atomic, FileError, Manifest, Provenance};
use crate::{CliError, Outcome};

#[derive(Debug, Serialize)]
struct Row {
    input: String,
    output: String,
    points: usize,
    in_range: usize,
    filtered: usize,
    clamped_intensity: usize,
    sha256: String,
}

pub fn run(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    require_input_dir(input)?;
    let out = require_out_dir(out)?;
    let files = list_inputs(input, "bin")?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;

    let results: Vec<Result<Row, FileError>> = pool(cfg)?.install(|| {
        files
            .par_iter()
            .map(|path| {
                let fail = |error: String| FileError { input: file_name(path), error };
                let cloud = read_cloud(path).map_err(|e| fail(e.to_string()))?;
                let (grid, stats) = rasterize_with_stats(&cloud, &cfg.bev).map_err(|e| fail(e.to_string()))?;
                let bytes = grid.encode().map_err(|e| fail(e.to_string()))?;
                let name = format!("{}.bevg", file_stem(path));
                write_atomic(&out.join(&name), &bytes).map_err(|e| fail(e.to_string()))?;
                Ok(Row {
                    input: file_name(path),
                    output: name,
                    points: cloud.len(),
                    in_range: stats.in_range,
                    filtered: stats.filtered,
                    clamped_intensity: cloud.clamped_intensity,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect()
    });

    let (rows, errors): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    let errors: Vec<FileError> = errors.into_iter().filter_map(Result::err).collect();
    for e in &errors {
        eprintln!("bevkit: {}: {}", e.input, e.error);
    }
    let manifest = Manifest {
        provenance: Provenance::new("rasterize", cfg.hash()),
        inputs: files.len(),
        succeeded: rows.len(),
        failed: errors.len(),
        files: rows.into_iter().filter_map(Result::ok).collect::<Vec<Row>>(),
        errors,
    };
    write_atomic(&out.join("manifest.json"), &to_json(&manifest))?;
    Ok(if manifest.failed == 0 { Outcome::Success } else { Outcome::Partial })
}
