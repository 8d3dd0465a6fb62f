use std::path::Path;

use bevkit::swag::gradcheck::{check_instance, Instance, InstanceShape};
use rayon::prelude::*;
use serde::Serialize;

use super::{emit_report, pool};
use crate::config::RunConfig;
use crate::output::Provenance;
use crate::{CliError, Outcome};

#[derive(Debug, Serialize)]
struct InstanceResult {
    seed: u64,
    shape: InstanceShape,
    checked: usize,
    max_error: f64,
    worst: String,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct Report {
    #[serde(flatten)]
    provenance: Provenance,
    step: f64,
    tolerance: f64,
    instances: usize,
    passed: usize,
    failed: usize,
    max_error: f64,
    results: Vec<InstanceResult>,
}

pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<Outcome, CliError> {
    let s = &cfg.swag;
    let seeds: Vec<u64> = (0..s.instances as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let results: Vec<InstanceResult> = pool(cfg)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let shape = InstanceShape::random(seed, s.max_extent);
                let report = check_instance(&Instance::random(shape, seed), s.step);
                match report {
                    Ok(r) => InstanceResult {
                        seed,
                        shape,
                        checked: r.checked,
                        max_error: r.max_error,
                        pass: r.passes(s.tolerance),
                        worst: r.worst,
                    },
                    Err(e) => InstanceResult {
                        seed,
                        shape,
                        checked: 0,
                        max_error: f64::INFINITY,
                        worst: e.to_string(),
                        pass: false,
                    },
                }
            })
            .collect()
    });
    let passed = results.iter().filter(|r| r.pass).count();
    let report = Report {
        provenance: Provenance::new("swag-check", cfg.hash()),
        step: s.step,
        tolerance: s.tolerance,
        instances: results.len(),
        passed,
        failed: results.len() - passed,
        max_error: results.iter().map(|r| r.max_error).fold(0.0, f64::max),
        results,
    };
    emit_report(&report, out)?;
    eprintln!(
        "swag-check: {}/{} instances within {:e} (max error {:e})",
        report.passed, report.instances, report.tolerance, report.max_error
    );
    Ok(if report.failed == 0 { Outcome::Success } else { Outcome::Partial })
}
