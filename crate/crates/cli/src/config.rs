//! Run configuration: one versioned JSON document, overridden by flags.
//!
//! Precedence, lowest first: built-in defaults, `--config` file, command-line flags.

use std::fs;
use std::path::Path;

use bevkit::geometry::DensifyConfig;
use bevkit::metrics::ApOptions;
use bevkit::raster::BevConfig;
use bevkit::sampler::{AugmentationSchedule, DatasetSpec, Role, DEFAULT_MOTION_DELTA, DEFAULT_SEMANTIC_STRIDE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Worker threads; `None` uses all logical CPUs.
    pub jobs: Option<usize>,
    pub bev: BevConfig,
    pub densify: DensifySection,
    pub sampler: SamplerSection,
    pub swag: SwagSection,
    pub decode: DecodeSection,
    pub eval: EvalSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            jobs: None,
            bev: BevConfig::default(),
            densify: DensifySection::default(),
            sampler: SamplerSection::default(),
            swag: SwagSection::default(),
            decode: DecodeSection::default(),
            eval: EvalSection::default(),
            bench: BenchSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifySection {
    pub delta_r_min: f64,
    pub delta_r_max: f64,
    pub copies_per_point: usize,
}

impl Default for DensifySection {
    fn default() -> Self {
        let d = DensifyConfig::default();
        Self { delta_r_min: d.delta_r_min, delta_r_max: d.delta_r_max, copies_per_point: d.copies_per_point }
    }
}

impl DensifySection {
    pub fn to_config(&self, seed: u64) -> DensifyConfig {
        DensifyConfig {
            delta_r_min: self.delta_r_min,
            delta_r_max: self.delta_r_max,
            copies_per_point: self.copies_per_point,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub datasets: Vec<DatasetSpec>,
    pub schedule: AugmentationSchedule,
    pub motion_delta: u64,
    pub semantic_stride: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            datasets: vec![
                DatasetSpec::new("kitti_detection", 9400, Role::Detection),
                DatasetSpec::new("semantic_kitti", 9560, Role::Semantic),
                DatasetSpec::new("motion", 4719, Role::Motion),
            ],
            schedule: AugmentationSchedule::default(),
            motion_delta: DEFAULT_MOTION_DELTA,
            semantic_stride: DEFAULT_SEMANTIC_STRIDE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwagSection {
    pub instances: usize,
    /// Upper bound for every random extent (H, W, C, D, K).
    pub max_extent: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for SwagSection {
    fn default() -> Self {
        Self { instances: 100, max_extent: 8, step: 1e-5, tolerance: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub threshold: f32,
    pub window: usize,
    pub delta_theta: f64,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self {
            threshold: bevkit::heads::DEFAULT_THRESHOLD,
            window: bevkit::heads::DEFAULT_WINDOW,
            delta_theta: bevkit::heads::DEFAULT_DELTA_THETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_threshold: f64,
    pub max_difficulty: Option<u8>,
    pub recall_points: usize,
    /// Classes scored by `seg-iou`; empty means every class present in either raster.
    pub classes: Vec<u32>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = ApOptions::default();
        Self { iou_threshold: d.iou_threshold, max_difficulty: d.max_difficulty, recall_points: d.recall_points, classes: Vec::new() }
    }
}

impl EvalSection {
    pub fn ap_options(&self) -> ApOptions {
        ApOptions { iou_threshold: self.iou_threshold, max_difficulty: self.max_difficulty, recall_points: self.recall_points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub repeats: usize,
    pub warmup: usize,
    pub points: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { repeats: 100, warmup: 10, points: 125_000 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Checks every section, so a bad value fails before any command runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        self.bev.validate().map_err(|e| CliError::Config(format!("bev: {e}")))?;
        self.densify.to_config(self.seed).validate().map_err(|e| CliError::Config(format!("densify: {e}")))?;
        self.sampler.schedule.validate().map_err(|e| CliError::Config(format!("sampler.schedule: {e}")))?;
        for role in Role::ALL {
            let n = self.sampler.datasets.iter().filter(|d| d.role == role).count();
            if n != 1 {
                return bad(format!("sampler.datasets: need exactly one {role:?} dataset, found {n}"));
            }
        }
        if let Some(d) = self.sampler.datasets.iter().find(|d| d.len == 0) {
            return bad(format!("sampler.datasets: {} is empty", d.name));
        }
        if self.sampler.semantic_stride == 0 {
            return bad("sampler.semantic_stride must be at least 1".into());
        }
        let s = &self.swag;
        if s.instances == 0 || s.max_extent == 0 {
            return bad("swag.instances and swag.max_extent must be positive".into());
        }
        if !(s.step > 0.0 && s.step.is_finite() && s.tolerance > 0.0 && s.tolerance.is_finite()) {
            return bad("swag.step and swag.tolerance must be positive".into());
        }
        let d = &self.decode;
        if d.window == 0 || d.window % 2 == 0 {
            return bad(format!("decode.window must be odd, got {}", d.window));
        }
        if !(0.0..=1.0).contains(&d.threshold) {
            return bad("decode.threshold must lie in [0, 1]".into());
        }
        bevkit::heads::bin_count(d.delta_theta).map_err(|e| CliError::Config(format!("decode: {e}")))?;
        let e = &self.eval;
        if !(e.iou_threshold >= 0.0 && e.iou_threshold < 1.0) {
            return bad("eval.iou_threshold must lie in [0, 1)".into());
        }
        if e.recall_points == 0 {
            return bad("eval.recall_points must be positive".into());
        }
        if self.bench.repeats == 0 {
            return bad("bench.repeats must be at least 1".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    /// `jobs` is left out: it never changes output bytes.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { jobs: None, ..self.clone() };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
