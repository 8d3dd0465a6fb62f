//! Asynchronous multi-dataset epoch planning.
//!
//! One epoch runs `N = max(L)` iterations. Iteration `i` reads
//! `i mod L` from every dataset, so the longest dataset is visited exactly
//! once per epoch and shorter ones cycle. Each iteration also carries an
//! augmentation directive drawn from the progressive schedule.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default moving-pixel threshold for motion frame selection.
pub const DEFAULT_MOTION_DELTA: u64 = 100;
/// Default stride over semantic frames.
pub const DEFAULT_SEMANTIC_STRIDE: usize = 5;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("no dataset with role {0:?}")]
    MissingRole(Role),
    #[error("more than one dataset with role {0:?}")]
    DuplicateRole(Role),
    #[error("dataset {0:?} has zero length")]
    EmptyDataset(String),
    #[error("invalid augmentation schedule: {0}")]
    InvalidSchedule(String),
    #[error("plan line {line}: {reason}")]
    MalformedPlan { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Detection,
    Semantic,
    Motion,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Detection, Role::Semantic, Role::Motion];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub len: u64,
    pub role: Role,
}

impl DatasetSpec {
    pub fn new(name: impl Into<String>, len: u64, role: Role) -> Self {
        Self { name: name.into(), len, role }
    }
}

/// Index into a dataset of length `spec.len`: `index mod L`.
///
/// # Panics
/// Panics when `spec.len == 0`.
pub fn remap_index(index: u64, spec: &DatasetSpec) -> u64 {
    index % spec.len
}

/// Linear ramp from `start` at epoch 0 to `end` at the final epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
}

impl Ramp {
    pub const fn constant(v: f64) -> Self {
        Self { start: v, end: v }
    }

    pub const fn linear(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    /// Value at `t ∈ [0, 1]`; `t` is clamped.
    pub fn at(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        self.start + (self.end - self.start) * t
    }

    fn bounds(&self) -> (f64, f64) {
        (self.start.min(self.end), self.start.max(self.end))
    }
}

/// Augmentation curves for one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskCurves {
    pub flip_prob: Ramp,
    /// Rotation is drawn uniformly from `±rotation_deg`.
    pub rotation_deg: Ramp,
    pub dropout: Ramp,
}

/// Augmentation intensity at a given epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub flip_prob: f64,
    pub rotation_deg: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSchedule {
    pub total_epochs: u32,
    pub detection: TaskCurves,
    pub semantic: TaskCurves,
    pub motion: TaskCurves,
}

impl Default for AugmentationSchedule {
    /// Segmentation tasks decay from ±15° / 10 % dropout to ±5° / 2 % over
    /// 120 epochs; detection stays at the final segmentation level.
    fn default() -> Self {
        let segmentation = TaskCurves {
            flip_prob: Ramp::constant(0.5),
            rotation_deg: Ramp::linear(15.0, 5.0),
            dropout: Ramp::linear(0.10, 0.02),
        };
        Self {
            total_epochs: 120,
            detection: TaskCurves {
                flip_prob: Ramp::constant(0.5),
                rotation_deg: Ramp::constant(5.0),
                dropout: Ramp::constant(0.02),
            },
            semantic: segmentation,
            motion: segmentation,
        }
    }
}

impl AugmentationSchedule {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.total_epochs == 0 {
            return Err(SamplerError::InvalidSchedule("total_epochs must be positive".into()));
        }
        for (name, c) in [("detection", &self.detection), ("semantic", &self.semantic), ("motion", &self.motion)] {
            let (lo, hi) = c.flip_prob.bounds();
            if !(lo >= 0.0 && hi <= 1.0) {
                return Err(SamplerError::InvalidSchedule(format!("{name}: flip probability outside [0, 1]")));
            }
            let (lo, hi) = c.dropout.bounds();
            if !(lo >= 0.0 && hi <= 1.0) {
                return Err(SamplerError::InvalidSchedule(format!("{name}: dropout outside [0, 1]")));
            }
            let (lo, hi) = c.rotation_deg.bounds();
            if !(lo >= 0.0 && hi < 180.0) {
                return Err(SamplerError::InvalidSchedule(format!("{name}: rotation range outside [0, 180)")));
            }
        }
        Ok(())
    }

    fn progress(&self, epoch: u32) -> f64 {
        if self.total_epochs <= 1 {
            return 1.0;
        }
        epoch as f64 / (self.total_epochs - 1) as f64
    }

    pub fn task_at(&self, role: Role, epoch: u32) -> AugmentParams {
        let c = match role {
            Role::Detection => &self.detection,
            Role::Semantic => &self.semantic,
            Role::Motion => &self.motion,
        };
        let t = self.progress(epoch);
        AugmentParams {
            flip_prob: c.flip_prob.at(t),
            rotation_deg: c.rotation_deg.at(t),
            dropout: c.dropout.at(t),
        }
    }

    /// Joint per-iteration intensity: element-wise maximum over the tasks.
    pub fn joint_at(&self, epoch: u32) -> AugmentParams {
        Role::ALL.iter().map(|&r| self.task_at(r, epoch)).fold(
            AugmentParams { flip_prob: 0.0, rotation_deg: 0.0, dropout: 0.0 },
            |a, b| AugmentParams {
                flip_prob: a.flip_prob.max(b.flip_prob),
                rotation_deg: a.rotation_deg.max(b.rotation_deg),
                dropout: a.dropout.max(b.dropout),
            },
        )
    }
}

/// Augmentation applied to all three frames of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDirective {
    pub flip: bool,
    pub rotation_deg: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRow {
    pub iteration: u64,
    pub detection_idx: u64,
    pub semantic_idx: u64,
    pub motion_idx: u64,
    pub augment: AugmentDirective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub epoch: u32,
    pub rows: Vec<PlanRow>,
}

fn spec_for(specs: &[DatasetSpec], role: Role) -> Result<&DatasetSpec, SamplerError> {
    let mut found = specs.iter().filter(|s| s.role == role);
    let spec = found.next().ok_or(SamplerError::MissingRole(role))?;
    if found.next().is_some() {
        return Err(SamplerError::DuplicateRole(role));
    }
    if spec.len == 0 {
        return Err(SamplerError::EmptyDataset(spec.name.clone()));
    }
    Ok(spec)
}

/// Seed for the augmentation stream of one epoch.
fn epoch_seed(seed: u64, epoch: u32) -> u64 {
    // splitmix64 finalizer over (seed, epoch)
    let mut z = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds the plan for one epoch. Indices depend only on the dataset lengths;
/// augmentation directives depend on `(epoch, seed)`.
pub fn build_epoch_plan(
    specs: &[DatasetSpec],
    epoch: u32,
    sched: &AugmentationSchedule,
    seed: u64,
) -> Result<EpochPlan, SamplerError> {
    let det = spec_for(specs, Role::Detection)?;
    let sem = spec_for(specs, Role::Semantic)?;
    let mot = spec_for(specs, Role::Motion)?;
    sched.validate()?;
    let n = det.len.max(sem.len).max(mot.len);
    let params = sched.joint_at(epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, epoch));
    let rows = (0..n)
        .map(|i| {
            let flip = rng.gen::<f64>() < params.flip_prob;
            let rotation_deg = (rng.gen::<f64>() * 2.0 - 1.0) * params.rotation_deg;
            PlanRow {
                iteration: i,
                detection_idx: remap_index(i, det),
                semantic_idx: remap_index(i, sem),
                motion_idx: remap_index(i, mot),
                augment: AugmentDirective { flip, rotation_deg, dropout: params.dropout },
            }
        })
        .collect();
    Ok(EpochPlan { epoch, rows })
}

impl EpochPlan {
    /// Line format: `iter det_idx sem_idx mot_idx flip rot_deg dropout`.
    /// Floats use shortest round-trip formatting, so [`parse_plan`] restores
    /// every row exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * 48);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {:?} {:?}",
                r.iteration,
                r.detection_idx,
                r.semantic_idx,
                r.motion_idx,
                u8::from(r.augment.flip),
                r.augment.rotation_deg,
                r.augment.dropout
            );
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), SamplerError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Parses the plan line format back into rows.
pub fn parse_plan(text: &str) -> Result<Vec<PlanRow>, SamplerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| parse_row(line).map_err(|reason| SamplerError::MalformedPlan { line: i + 1, reason }))
        .collect()
}

pub fn read_plan(path: impl AsRef<Path>) -> Result<Vec<PlanRow>, SamplerError> {
    parse_plan(&fs::read_to_string(path)?)
}

fn parse_row(line: &str) -> Result<PlanRow, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 7 {
        return Err(format!("expected 7 fields, found {}", f.len()));
    }
    let int = |s: &str| s.parse::<u64>().map_err(|e| format!("{s:?}: {e}"));
    let float = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    let flip = match f[4] {
        "0" => false,
        "1" => true,
        other => return Err(format!("flip must be 0 or 1, found {other:?}")),
    };
    Ok(PlanRow {
        iteration: int(f[0])?,
        detection_idx: int(f[1])?,
        semantic_idx: int(f[2])?,
        motion_idx: int(f[3])?,
        augment: AugmentDirective { flip, rotation_deg: float(f[5])?, dropout: float(f[6])? },
    })
}

/// Frames with strictly more than `delta` moving pixels, ascending.
pub fn select_motion_frames(moving_pixel_counts: &[u64], delta: u64) -> Vec<usize> {
    moving_pixel_counts
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| (c > delta).then_some(i))
        .collect()
}

/// Every `stride`-th id starting with the first.
///
/// # Panics
/// Panics when `stride == 0`.
pub fn semantic_stride_filter<T: Clone>(frame_ids: &[T], stride: usize) -> Vec<T> {
    assert!(stride >= 1, "stride must be at least 1");
    frame_ids.iter().step_by(stride).cloned().collect()
}
