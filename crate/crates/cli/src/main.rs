//! `bevkit`: batch front end for rasterization, densification, epoch
//! planning, SWAG gradient checks, evaluation and latency benchmarks.
//!
//! Exit codes: 0 success, 1 partial failure, 2 configuration or usage error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some inputs failed or some checks did not pass.
    Partial,
}

#[derive(Debug, Parser)]
#[command(name = "bevkit", version, about = "LiDAR BEV preprocessing, verification and evaluation toolkit")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (rasterize, densify) or file (other commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize every `.bin` cloud in a directory into `.bevg` grids.
    Rasterize {
        #[arg(long)]
        input: PathBuf,
    },
    /// Append range-shifted copies to every `.bin` cloud in a directory.
    Densify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        delta_r_min: Option<f64>,
        #[arg(long)]
        delta_r_max: Option<f64>,
        #[arg(long)]
        copies: Option<usize>,
    },
    /// Write the iteration plan for one epoch.
    PlanEpoch {
        #[arg(long, default_value_t = 0)]
        epoch: u32,
        /// Dataset lengths as `detection,semantic,motion`.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<u64>>,
    },
    /// Compare analytic SWAG gradients with central finite differences.
    SwagCheck {
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        max_extent: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Score detections or segmentation rasters.
    Eval {
        #[command(subcommand)]
        mode: EvalMode,
    },
    /// Time pipeline stages on a seeded synthetic workload.
    Bench {
        #[arg(long, value_enum, default_value_t = Stage::All)]
        stage: Stage,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
enum EvalMode {
    /// Average precision of rotated BEV boxes.
    Ap {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        iou_threshold: Option<f64>,
        #[arg(long)]
        max_difficulty: Option<u8>,
    },
    /// Per-class IoU of two class rasters (`.label` or single-channel `.bevg`).
    SegIou {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<u32>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Rasterize,
    RasterizeParallel,
    Densify,
    SwagForward,
    Decode,
    All,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = Some(jobs);
    }
    match &cli.command {
        Command::Densify { delta_r_min, delta_r_max, copies, .. } => {
            cfg.densify.delta_r_min = delta_r_min.unwrap_or(cfg.densify.delta_r_min);
            cfg.densify.delta_r_max = delta_r_max.unwrap_or(cfg.densify.delta_r_max);
            cfg.densify.copies_per_point = copies.unwrap_or(cfg.densify.copies_per_point);
        }
        Command::PlanEpoch { lengths: Some(l), .. } => {
            if l.len() != 3 {
                return Err(CliError::Config(format!("--lengths needs 3 values, got {}", l.len())));
            }
            for (spec, &len) in cfg.sampler.datasets.iter_mut().zip(l) {
                spec.len = len;
            }
            // Positional lengths only make sense for the role order used by the defaults.
            let order = [bevkit::Role::Detection, bevkit::Role::Semantic, bevkit::Role::Motion];
            if cfg.sampler.datasets.iter().map(|d| d.role).ne(order) {
                return Err(CliError::Config("--lengths needs datasets listed as detection, semantic, motion".into()));
            }
        }
        Command::SwagCheck { instances, max_extent, tolerance, step } => {
            cfg.swag.instances = instances.unwrap_or(cfg.swag.instances);
            cfg.swag.max_extent = max_extent.unwrap_or(cfg.swag.max_extent);
            cfg.swag.tolerance = tolerance.unwrap_or(cfg.swag.tolerance);
            cfg.swag.step = step.unwrap_or(cfg.swag.step);
        }
        Command::Eval { mode: EvalMode::Ap { iou_threshold, max_difficulty, .. } } => {
            cfg.eval.iou_threshold = iou_threshold.unwrap_or(cfg.eval.iou_threshold);
            if max_difficulty.is_some() {
                cfg.eval.max_difficulty = *max_difficulty;
            }
        }
        Command::Eval { mode: EvalMode::SegIou { classes: Some(c), .. } } => cfg.eval.classes = c.clone(),
        Command::Bench { repeats, warmup, points, .. } => {
            cfg.bench.repeats = repeats.unwrap_or(cfg.bench.repeats);
            cfg.bench.warmup = warmup.unwrap_or(cfg.bench.warmup);
            cfg.bench.points = points.unwrap_or(cfg.bench.points);
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let cfg = effective_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Rasterize { input } => commands::rasterize::run(&cfg, input, out),
        Command::Densify { input, .. } => commands::densify::run(&cfg, input, out),
        Command::PlanEpoch { epoch, .. } => commands::plan::run(&cfg, *epoch, out),
        Command::SwagCheck { .. } => commands::swag::run(&cfg, out),
        Command::Eval { mode: EvalMode::Ap { dets, gt, .. } } => commands::eval::run_ap(&cfg, dets, gt, out),
        Command::Eval { mode: EvalMode::SegIou { pred, gt, .. } } => commands::eval::run_seg(&cfg, pred, gt, out),
        Command::Bench { stage, .. } => commands::bench::run(&cfg, *stage, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("bevkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
