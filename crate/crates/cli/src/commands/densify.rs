use std::path::Path;

use bevkit::geometry::densify;
use bevkit::pointcloud::{encode_cloud, read_cloud};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{pool, require_input_dir, require_out_dir};
use crate::config::RunConfig;
use crate::output::{file_name, list_inputs, sha256_hex, to_json, write_atomic, FileError, Manifest, Provenance};
use crate::{CliError, Outcome};

#[derive(Debug, Serialize)]
struct Row {
    input: String,
    output: String,
    seed: u64,
    points_in: usize,
    points_out: usize,
    skipped_origin: usize,
    sha256: String,
}

/// Per-file stream seed: the run seed mixed with the file name, so results do
/// not depend on which other files share the directory.
fn file_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn run(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    require_input_dir(input)?;
    let out = require_out_dir(out)?;
    if input.canonicalize().ok() == out.canonicalize().ok() {
        return Err(CliError::Config("--out must differ from --input".into()));
    }
    let files = list_inputs(input, "bin")?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;

    let results: Vec<Result<Row, FileError>> = pool(cfg)?.install(|| {
        files
            .par_iter()
            .map(|path| {
                let name = file_name(path);
                let fail = |error: String| FileError { input: name.clone(), error };
                let cloud = read_cloud(path).map_err(|e| fail(e.to_string()))?;
                let seed = file_seed(cfg.seed, &name);
                let (dense, stats) = densify(&cloud, &cfg.densify.to_config(seed)).map_err(|e| fail(e.to_string()))?;
                let bytes = encode_cloud(&dense);
                write_atomic(&out.join(&name), &bytes).map_err(|e| fail(e.to_string()))?;
                Ok(Row {
                    input: name.clone(),
                    output: name.clone(),
                    seed,
                    points_in: cloud.len(),
                    points_out: dense.len(),
                    skipped_origin: stats.skipped_origin,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                eprintln!("bevkit: {}: {}", e.input, e.error);
                errors.push(e);
            }
        }
    }
    let manifest = Manifest {
        provenance: Provenance::new("densify", cfg.hash()),
        inputs: files.len(),
        succeeded: rows.len(),
        failed: errors.len(),
        files: rows,
        errors,
    };
    write_atomic(&out.join("manifest.json"), &to_json(&manifest))?;
    Ok(if manifest.failed == 0 { Outcome::Success } else { Outcome::Partial })
}
