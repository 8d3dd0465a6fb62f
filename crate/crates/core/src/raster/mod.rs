//! Bird's-eye-view rasterization.
//!
//! A point `(x, y, z)` falls in cell `u = ⌊(x − x_min)/r_x⌋`, `v = ⌊(y − y_min)/r_y⌋`;
//! `u` indexes rows (forward axis) and `v` columns (lateral axis). Grids are
//! stored row-major `H × W × C`.

pub mod container;

use std::cell::RefCell;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pointcloud::PointCloud;
pub use container::ContainerError;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid BEV config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("channel {channel} out of range for {channels} channels")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("expected {expected} frames, got {found}")]
    FrameCount { expected: usize, found: usize },
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// Maximum clamped z in the cell.
    MaxHeight,
    /// Mean intensity of the cell's points.
    MeanIntensity,
    /// `ln(1 + min(n, cap)) / ln(1 + cap)`.
    Density,
    /// 1 when the cell holds at least one point.
    Occupancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BevConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub res_x: f64,
    pub res_y: f64,
    pub channels: Vec<ChannelKind>,
    /// Heights are clamped to `[z_min, z_max]` before aggregation.
    pub z_min: f64,
    pub z_max: f64,
    pub density_cap: u32,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 60.0,
            y_min: -30.0,
            y_max: 30.0,
            res_x: 0.125,
            res_y: 0.125,
            channels: vec![
                ChannelKind::MaxHeight,
                ChannelKind::MeanIntensity,
                ChannelKind::Density,
                ChannelKind::Occupancy,
            ],
            z_min: -3.0,
            z_max: 3.0,
            density_cap: 16,
        }
    }
}

fn cell_count(extent: f64, res: f64) -> Option<usize> {
    if !(extent.is_finite() && res.is_finite()) || extent <= 0.0 || res <= 0.0 {
        return None;
    }
    let n = extent / res;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-9 * rounded.max(1.0) || rounded > u16::MAX as f64 {
        return None;
    }
    Some(rounded as usize)
}

impl BevConfig {
    pub fn validate(&self) -> Result<(), RasterError> {
        if cell_count(self.x_max - self.x_min, self.res_x).is_none() {
            return Err(RasterError::InvalidConfig(
                "x extent must be a positive whole number of cells (at most 65535)".into(),
            ));
        }
        if cell_count(self.y_max - self.y_min, self.res_y).is_none() {
            return Err(RasterError::InvalidConfig(
                "y extent must be a positive whole number of cells (at most 65535)".into(),
            ));
        }
        if self.channels.is_empty() {
            return Err(RasterError::InvalidConfig("at least one channel required".into()));
        }
        if !(self.z_min.is_finite() && self.z_max.is_finite() && self.z_min < self.z_max) {
            return Err(RasterError::InvalidConfig("require finite z_min < z_max".into()));
        }
        if self.density_cap == 0 {
            return Err(RasterError::InvalidConfig("density_cap must be positive".into()));
        }
        Ok(())
    }

    /// Rows `H`. Assumes a validated config.
    pub fn height(&self) -> usize {
        cell_count(self.x_max - self.x_min, self.res_x).unwrap_or(0)
    }

    /// Columns `W`. Assumes a validated config.
    pub fn width(&self) -> usize {
        cell_count(self.y_max - self.y_min, self.res_y).unwrap_or(0)
    }

    pub fn channel_index(&self, kind: ChannelKind) -> Option<usize> {
        self.channels.iter().position(|&k| k == kind)
    }

    /// Cell `(u, v)` of a point, or `None` when it falls outside `[0,H)×[0,W)`.
    pub fn cell_of(&self, p: [f64; 3]) -> Option<(usize, usize)> {
        let fu = ((p[0] - self.x_min) / self.res_x).floor();
        let fv = ((p[1] - self.y_min) / self.res_y).floor();
        if !(fu >= 0.0 && fv >= 0.0) {
            return None;
        }
        let (u, v) = (fu as usize, fv as usize);
        (u < self.height() && v < self.width()).then_some((u, v))
    }

    /// Metric center of cell `(u, v)`.
    pub fn cell_center(&self, u: usize, v: usize) -> (f64, f64) {
        (
            self.x_min + (u as f64 + 0.5) * self.res_x,
            self.y_min + (v as f64 + 0.5) * self.res_y,
        )
    }
}

/// Dense `H × W × C` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    /// In-memory tag only; not persisted by the container format.
    pub frame_id: u64,
}

impl BevGrid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels], frame_id: 0 }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize, c: usize) -> usize {
        (u * self.width + v) * self.channels + c
    }

    pub fn get(&self, u: usize, v: usize, c: usize) -> f32 {
        self.data[self.index(u, v, c)]
    }

    pub fn set(&mut self, u: usize, v: usize, c: usize, value: f32) {
        let i = self.index(u, v, c);
        self.data[i] = value;
    }

    /// Copy of a contiguous channel range.
    pub fn select_channels(&self, range: Range<usize>) -> Result<BevGrid, RasterError> {
        if range.start > range.end || range.end > self.channels {
            return Err(RasterError::ChannelOutOfRange { channel: range.end, channels: self.channels });
        }
        let c = range.len();
        let mut out = BevGrid::zeros(self.height, self.width, c);
        out.frame_id = self.frame_id;
        for (dst, src) in out.data.chunks_exact_mut(c.max(1)).zip(self.data.chunks_exact(self.channels)) {
            dst.copy_from_slice(&src[range.clone()]);
        }
        Ok(out)
    }

    pub fn encode(&self) -> Result<Vec<u8>, RasterError> {
        Ok(container::encode_f32(self.height, self.width, self.channels, &self.data)?)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let (h, data) = container::decode_f32(bytes)?;
        Ok(Self { height: h.height, width: h.width, channels: h.channels, data, frame_id: 0 })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        Self::decode(&fs::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    pub in_range: usize,
    pub filtered: usize,
}

#[derive(Debug, Clone, Copy)]
struct CellAgg {
    intensity_sum: f64,
    max_z: f64,
    count: u32,
}

impl CellAgg {
    const EMPTY: CellAgg = CellAgg { intensity_sum: 0.0, max_z: f64::NEG_INFINITY, count: 0 };
}

/// Per-cell running aggregates plus the list of cells touched so far, so
/// finishing and resetting cost scales with the points, not the grid.
struct Accumulator {
    cells: Vec<CellAgg>,
    touched: Vec<u32>,
    in_range: usize,
}

impl Accumulator {
    fn new(cells: usize) -> Self {
        Self { cells: vec![CellAgg::EMPTY; cells], touched: Vec::new(), in_range: 0 }
    }

    fn reset(&mut self) {
        for &t in &self.touched {
            self.cells[t as usize] = CellAgg::EMPTY;
        }
        self.touched.clear();
        self.in_range = 0;
    }

    fn add(&mut self, cloud: &PointCloud, range: Range<usize>, cfg: &BevConfig) {
        let (h, w) = (cfg.height(), cfg.width());
        let (xs, ys, zs, is) = (&cloud.x[range.clone()], &cloud.y[range.clone()], &cloud.z[range.clone()], &cloud.intensity[range]);
        for i in 0..xs.len() {
            // Same arithmetic as `cell_of`, so edge points land identically.
            let fu = ((xs[i] - cfg.x_min) / cfg.res_x).floor();
            let fv = ((ys[i] - cfg.y_min) / cfg.res_y).floor();
            if !(fu >= 0.0 && fv >= 0.0) {
                continue;
            }
            let (u, v) = (fu as usize, fv as usize);
            if u >= h || v >= w {
                continue;
            }
            let cell = u * w + v;
            let agg = &mut self.cells[cell];
            if agg.count == 0 {
                self.touched.push(cell as u32);
            }
            agg.count += 1;
            agg.intensity_sum += is[i];
            let z = zs[i].clamp(cfg.z_min, cfg.z_max);
            if z > agg.max_z {
                agg.max_z = z;
            }
            self.in_range += 1;
        }
    }

    fn merge(mut self, other: Accumulator) -> Self {
        for &t in &other.touched {
            let (a, b) = (&mut self.cells[t as usize], other.cells[t as usize]);
            if a.count == 0 {
                self.touched.push(t);
            }
            a.count += b.count;
            a.intensity_sum += b.intensity_sum;
            a.max_z = a.max_z.max(b.max_z);
        }
        self.in_range += other.in_range;
        self
    }

    fn finish(&self, cfg: &BevConfig, total: usize) -> (BevGrid, RasterStats) {
        let c = cfg.channels.len();
        let mut grid = BevGrid::zeros(cfg.height(), cfg.width(), c);
        let cap = cfg.density_cap;
        let density_norm = 1.0 / (cap as f64).ln_1p();
        for &t in &self.touched {
            let cell = t as usize;
            let agg = self.cells[cell];
            let n = agg.count;
            for (slot, kind) in grid.data[cell * c..(cell + 1) * c].iter_mut().zip(&cfg.channels) {
                *slot = match kind {
                    ChannelKind::MaxHeight => agg.max_z as f32,
                    ChannelKind::MeanIntensity => (agg.intensity_sum / n as f64) as f32,
                    ChannelKind::Density => ((n.min(cap) as f64).ln_1p() * density_norm) as f32,
                    ChannelKind::Occupancy => 1.0,
                };
            }
        }
        let stats = RasterStats { in_range: self.in_range, filtered: total - self.in_range };
        (grid, stats)
    }
}

thread_local! {
    /// Scratch reused by serial rasterization on each thread.
    static SCRATCH: RefCell<Option<Accumulator>> = const { RefCell::new(None) };
}

/// Aggregates a cloud into the configured BEV grid. Out-of-range points are dropped.
pub fn rasterize(cloud: &PointCloud, cfg: &BevConfig) -> Result<BevGrid, RasterError> {
    Ok(rasterize_with_stats(cloud, cfg)?.0)
}

pub fn rasterize_with_stats(cloud: &PointCloud, cfg: &BevConfig) -> Result<(BevGrid, RasterStats), RasterError> {
    cfg.validate()?;
    let cells = cfg.height() * cfg.width();
    SCRATCH.with(|slot| {
        let mut slot = slot.borrow_mut();
        let mut acc = match slot.take() {
            Some(a) if a.cells.len() == cells => a,
            _ => Accumulator::new(cells),
        };
        acc.add(cloud, 0..cloud.len(), cfg);
        let out = acc.finish(cfg, cloud.len());
        acc.reset();
        *slot = Some(acc);
        Ok(out)
    })
}

/// Multi-threaded variant: points are split into `workers` contiguous chunks,
/// each aggregated into a private tile, and tiles are merged in chunk order.
/// Max and occupancy channels match [`rasterize`] exactly; means agree to
/// floating-point summation order.
pub fn rasterize_parallel(cloud: &PointCloud, cfg: &BevConfig, workers: usize) -> Result<BevGrid, RasterError> {
    cfg.validate()?;
    let workers = workers.max(1);
    let chunk = cloud.len().div_ceil(workers).max(1);
    let cells = cfg.height() * cfg.width();
    let tiles: Vec<Accumulator> = (0..workers)
        .into_par_iter()
        .map(|k| {
            let start = (k * chunk).min(cloud.len());
            let end = ((k + 1) * chunk).min(cloud.len());
            let mut acc = Accumulator::new(cells);
            acc.add(cloud, start..end, cfg);
            acc
        })
        .collect();
    let merged = tiles.into_iter().reduce(Accumulator::merge).expect("at least one worker");
    Ok(merged.finish(cfg, cloud.len()).0)
}

fn check_same_shape(a: &BevGrid, b: &BevGrid) -> Result<(), RasterError> {
    if a.shape() != b.shape() {
        return Err(RasterError::ShapeMismatch(a.shape(), b.shape()));
    }
    Ok(())
}

/// Element-wise `current − past`.
pub fn pseudo_residual(current: &BevGrid, past: &BevGrid) -> Result<BevGrid, RasterError> {
    check_same_shape(current, past)?;
    let data = current.data.iter().zip(&past.data).map(|(c, p)| c - p).collect();
    Ok(BevGrid { data, ..current.clone_shape() })
}

/// Replaces `channel` by `v² / max(v²)`; an all-zero channel is left as is.
pub fn static_disparity(grid: &BevGrid, channel: usize) -> Result<BevGrid, RasterError> {
    if channel >= grid.channels {
        return Err(RasterError::ChannelOutOfRange { channel, channels: grid.channels });
    }
    let mut out = grid.clone();
    let max_sq = out
        .data
        .iter()
        .skip(channel)
        .step_by(grid.channels)
        .map(|v| v * v)
        .fold(0.0f32, f32::max);
    if max_sq > 0.0 {
        for v in out.data.iter_mut().skip(channel).step_by(grid.channels) {
            *v = *v * *v / max_sq;
        }
    }
    Ok(out)
}

/// Channel-concatenates frames ordered oldest → newest; newest occupies the last `C` channels.
pub fn stack_motion_frames(frames: &[BevGrid]) -> Result<BevGrid, RasterError> {
    if frames.len() != 3 {
        return Err(RasterError::FrameCount { expected: 3, found: frames.len() });
    }
    stack_frames(frames)
}

/// Channel concatenation of any number of equally shaped frames.
pub fn stack_frames(frames: &[BevGrid]) -> Result<BevGrid, RasterError> {
    let first = frames.first().ok_or(RasterError::FrameCount { expected: 1, found: 0 })?;
    for f in &frames[1..] {
        check_same_shape(first, f)?;
    }
    let c = first.channels;
    let mut out = BevGrid::zeros(first.height, first.width, c * frames.len());
    out.frame_id = frames.last().map_or(0, |f| f.frame_id);
    for (cell, dst) in out.data.chunks_exact_mut(c * frames.len()).enumerate() {
        for (k, f) in frames.iter().enumerate() {
            dst[k * c..(k + 1) * c].copy_from_slice(&f.data[cell * c..(cell + 1) * c]);
        }
    }
    Ok(out)
}

impl BevGrid {
    fn clone_shape(&self) -> BevGrid {
        BevGrid { height: self.height, width: self.width, channels: self.channels, data: Vec::new(), frame_id: self.frame_id }
    }
}
