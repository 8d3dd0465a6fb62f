pub mod bench;
pub mod densify;
pub mod eval;
pub mod plan;
pub mod rasterize;
pub mod swag;

use std::path::Path;

use crate::config::RunConfig;
use crate::output::{to_json, write_atomic};
use crate::CliError;

/// Bounded worker pool sized by `jobs` (all logical CPUs when unset).
pub fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Io(format!("thread pool: {e}")))
}

/// Output directory for batch commands: required, and must not be a file.
pub fn require_out_dir(out: Option<&Path>) -> Result<&Path, CliError> {
    let out = out.ok_or_else(|| CliError::Config("--out <DIR> is required".into()))?;
    if out.exists() && !out.is_dir() {
        return Err(CliError::Config(format!("{} exists and is not a directory", out.display())));
    }
    Ok(out)
}

pub fn require_input_dir(input: &Path) -> Result<(), CliError> {
    if !input.is_dir() {
        return Err(CliError::Input(format!("{} is not a directory", input.display())));
    }
    Ok(())
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Input(format!("{} is not a readable file", path.display())));
    }
    Ok(())
}

/// Writes a JSON report to `out`, or to stdout when no path is given.
pub fn emit_report<T: serde::Serialize>(report: &T, out: Option<&Path>) -> Result<(), CliError> {
    let bytes = to_json(report);
    match out {
        Some(path) => write_atomic(path, &bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}
