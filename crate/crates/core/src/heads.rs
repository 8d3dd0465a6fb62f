//! Decoding of keypoint, orientation and dimension head rasters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::raster::BevConfig;

/// Orientation bin width in degrees.
pub const DEFAULT_DELTA_THETA: f64 = 5.0;
pub const DEFAULT_THRESHOLD: f32 = 0.3;
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("expected {expected} orientation logits, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("bin width {0} does not divide 180 degrees")]
    InvalidBinWidth(f64),
    #[error("window must be odd and positive, got {0}")]
    InvalidWindow(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Number of orientation bins covering `[0, 180)` at width `delta_theta`.
pub fn bin_count(delta_theta: f64) -> Result<usize, DecodeError> {
    let n = 180.0 / delta_theta;
    if !(delta_theta > 0.0) || !n.is_finite() || (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
        return Err(DecodeError::InvalidBinWidth(delta_theta));
    }
    Ok(n.round() as usize)
}

/// Raw head outputs on an `H × W` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRasters {
    pub height: usize,
    pub width: usize,
    /// `H × W` scores in `[0, 1]`.
    pub heatmap: Vec<f32>,
    /// `H × W × bins` logits.
    pub orientation_logits: Vec<f32>,
    pub bins: usize,
    /// `H × W × 2`: width then length, meters.
    pub dims: Vec<f32>,
}

impl HeadRasters {
    pub fn zeros(height: usize, width: usize, bins: usize) -> Self {
        let cells = height * width;
        Self {
            height,
            width,
            heatmap: vec![0.0; cells],
            orientation_logits: vec![0.0; cells * bins],
            bins,
            dims: vec![0.0; cells * 2],
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let cells = self.height * self.width;
        if self.heatmap.len() != cells {
            return Err(DecodeError::ShapeMismatch(format!("heatmap has {} cells, expected {cells}", self.heatmap.len())));
        }
        if self.orientation_logits.len() != cells * self.bins {
            return Err(DecodeError::ShapeMismatch("orientation logits do not cover H × W × bins".into()));
        }
        if self.dims.len() != cells * 2 {
            return Err(DecodeError::ShapeMismatch("dimension map does not cover H × W × 2".into()));
        }
        Ok(())
    }

    fn logits_at(&self, u: usize, v: usize) -> &[f32] {
        let base = (u * self.width + v) * self.bins;
        &self.orientation_logits[base..base + self.bins]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub u: usize,
    pub v: usize,
    pub score: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_id: u64,
    pub center_uv: (usize, usize),
    /// Metric cell center.
    pub center_xy: (f64, f64),
    /// Orientation in `[0, 180)` degrees.
    pub yaw_deg: f64,
    pub width: f64,
    pub length: f64,
    pub score: f64,
}

/// Sliding maximum over a clipped window of `2r + 1` along rows then columns.
fn window_max(map: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    let mut rows = vec![f32::NEG_INFINITY; h * w];
    for u in 0..h {
        let row = &map[u * w..(u + 1) * w];
        for v in 0..w {
            let lo = v.saturating_sub(r);
            let hi = (v + r).min(w - 1);
            rows[u * w + v] = row[lo..=hi].iter().copied().fold(f32::NEG_INFINITY, f32::max);
        }
    }
    let mut out = vec![f32::NEG_INFINITY; h * w];
    for u in 0..h {
        let lo = u.saturating_sub(r);
        let hi = (u + r).min(h - 1);
        for v in 0..w {
            out[u * w + v] = (lo..=hi).map(|uu| rows[uu * w + v]).fold(f32::NEG_INFINITY, f32::max);
        }
    }
    out
}

/// Cells that are strict maxima of their `window × window` neighbourhood and
/// score at least `threshold`, sorted by descending score then `(u, v)`.
pub fn extract_keypoints(
    heatmap: &[f32],
    height: usize,
    width: usize,
    threshold: f32,
    window: usize,
) -> Result<Vec<Keypoint>, DecodeError> {
    if window == 0 || window % 2 == 0 {
        return Err(DecodeError::InvalidWindow(window));
    }
    if heatmap.len() != height * width {
        return Err(DecodeError::ShapeMismatch(format!("heatmap has {} cells, expected {}", heatmap.len(), height * width)));
    }
    if heatmap.is_empty() {
        return Ok(Vec::new());
    }
    let r = window / 2;
    let wmax = window_max(heatmap, height, width, r);
    let mut peaks = Vec::new();
    for u in 0..height {
        for v in 0..width {
            let s = heatmap[u * width + v];
            if !(s >= threshold) || s != wmax[u * width + v] {
                continue;
            }
            // Equal to the window max; reject plateaus.
            let unique = (u.saturating_sub(r)..=(u + r).min(height - 1)).all(|uu| {
                (v.saturating_sub(r)..=(v + r).min(width - 1))
                    .all(|vv| (uu, vv) == (u, v) || heatmap[uu * width + vv] < s)
            });
            if unique {
                peaks.push(Keypoint { u, v, score: s });
            }
        }
    }
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.u, a.v).cmp(&(b.u, b.v))));
    Ok(peaks)
}

/// Index of the largest logit; ties resolve to the lower index.
pub fn argmax(logits: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (j, &z) in logits.iter().enumerate() {
        match best {
            Some((_, b)) if !(z > b) => {}
            _ => best = Some((j, z)),
        }
    }
    best.map(|(j, _)| j)
}

/// Bin-center yaw in degrees: `(argmax + 0.5) · Δθ`.
pub fn decode_orientation(logits: &[f32], delta_theta: f64) -> Result<f64, DecodeError> {
    let bins = bin_count(delta_theta)?;
    if logits.len() != bins {
        return Err(DecodeError::LengthMismatch { expected: bins, found: logits.len() });
    }
    let j = argmax(logits).expect("non-empty");
    Ok((j as f64 + 0.5) * delta_theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub detections: Vec<Detection>,
    /// Keypoints dropped for non-positive width or length.
    pub dropped_invalid_dims: usize,
}

/// Turns head rasters into detections on the grid described by `cfg`.
pub fn assemble_detections(
    rasters: &HeadRasters,
    cfg: &BevConfig,
    threshold: f32,
    window: usize,
    delta_theta: f64,
    frame_id: u64,
) -> Result<DecodeOutput, DecodeError> {
    rasters.validate()?;
    if (rasters.height, rasters.width) != (cfg.height(), cfg.width()) {
        return Err(DecodeError::ShapeMismatch(format!(
            "head rasters are {}x{}, BEV grid is {}x{}",
            rasters.height,
            rasters.width,
            cfg.height(),
            cfg.width()
        )));
    }
    let bins = bin_count(delta_theta)?;
    if bins != rasters.bins {
        return Err(DecodeError::LengthMismatch { expected: bins, found: rasters.bins });
    }
    let keypoints = extract_keypoints(&rasters.heatmap, rasters.height, rasters.width, threshold, window)?;
    let mut out = DecodeOutput { detections: Vec::with_capacity(keypoints.len()), dropped_invalid_dims: 0 };
    for kp in keypoints {
        let cell = kp.u * rasters.width + kp.v;
        let (width, length) = (rasters.dims[cell * 2] as f64, rasters.dims[cell * 2 + 1] as f64);
        if !(width > 0.0 && length > 0.0) {
            out.dropped_invalid_dims += 1;
            continue;
        }
        out.detections.push(Detection {
            frame_id,
            center_uv: (kp.u, kp.v),
            center_xy: cfg.cell_center(kp.u, kp.v),
            yaw_deg: decode_orientation(rasters.logits_at(kp.u, kp.v), delta_theta)?,
            width,
            length,
            score: kp.score as f64,
        });
    }
    Ok(out)
}

/// One line per detection: `frame_id cx cy yaw_deg width length score`.
pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let _ = writeln!(
            s,
            "{} {:?} {:?} {:?} {:?} {:?} {:?}",
            d.frame_id, d.center_xy.0, d.center_xy.1, d.yaw_deg, d.width, d.length, d.score
        );
    }
    s
}

/// A detection as read back from the exchange format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub frame_id: u64,
    pub cx: f64,
    pub cy: f64,
    pub yaw_deg: f64,
    pub width: f64,
    pub length: f64,
    pub score: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        Self {
            frame_id: d.frame_id,
            cx: d.center_xy.0,
            cy: d.center_xy.1,
            yaw_deg: d.yaw_deg,
            width: d.width,
            length: d.length,
            score: d.score,
        }
    }
}

/// Parses the detection exchange format. Blank lines and `#` comments are skipped.
pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>, DecodeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = |reason: String| DecodeError::MalformedLine { line: i + 1, reason };
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| -> Result<f64, DecodeError> {
            let v: f64 = s.parse().map_err(|_| bad(format!("not a number: {s:?}")))?;
            if v.is_finite() { Ok(v) } else { Err(bad(format!("non-finite value: {s:?}"))) }
        };
        out.push(DetectionRecord {
            frame_id: f[0].parse().map_err(|_| bad(format!("bad frame id {:?}", f[0])))?,
            cx: num(f[1])?,
            cy: num(f[2])?,
            yaw_deg: num(f[3])?,
            width: num(f[4])?,
            length: num(f[5])?,
            score: num(f[6])?,
        });
    }
    Ok(out)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>, DecodeError> {
    let text = fs::read_to_string(path).map_err(|e| DecodeError::Io(e.to_string()))?;
    parse_detections(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_has_no_peaks() {
        assert!(extract_keypoints(&[0.0; 64], 8, 8, 0.5, 3).unwrap().is_empty());
    }

    #[test]
    fn single_spike() {
        let (h, w) = (32, 32);
        let mut map = vec![0.0; h * w];
        map[10 * w + 20] = 1.0;
        assert_eq!(extract_keypoints(&map, h, w, 0.5, 3).unwrap(), vec![Keypoint { u: 10, v: 20, score: 1.0 }]);
    }

    #[test]
    fn plateau_is_not_a_peak() {
        let mut map = vec![0.0; 16];
        map[5] = 0.9;
        map[6] = 0.9;
        assert!(extract_keypoints(&map, 4, 4, 0.1, 3).unwrap().is_empty());
        // With window 1 every cell is its own neighbourhood.
        assert_eq!(extract_keypoints(&map, 4, 4, 0.1, 1).unwrap().len(), 2);
    }

    #[test]
    fn ordering_and_threshold() {
        let mut map = vec![0.0; 100];
        map[2 * 10 + 2] = 0.6;
        map[7 * 10 + 7] = 0.9;
        map[2 * 10 + 7] = 0.6;
        map[7 * 10 + 2] = 0.2;
        let peaks = extract_keypoints(&map, 10, 10, 0.3, 3).unwrap();
        let cells: Vec<_> = peaks.iter().map(|k| (k.u, k.v)).collect();
        assert_eq!(cells, vec![(7, 7), (2, 2), (2, 7)]);
    }

    #[test]
    fn window_validation() {
        assert_eq!(extract_keypoints(&[0.0; 4], 2, 2, 0.1, 2), Err(DecodeError::InvalidWindow(2)));
        assert_eq!(extract_keypoints(&[0.0; 4], 2, 2, 0.1, 0), Err(DecodeError::InvalidWindow(0)));
        assert!(extract_keypoints(&[0.0; 3], 2, 2, 0.1, 3).is_err());
    }

    #[test]
    fn orientation_bin_centers() {
        let mut z = vec![0.0f32; 36];
        z[0] = 1.0;
        assert_eq!(decode_orientation(&z, 5.0).unwrap(), 2.5);
        z[0] = 0.0;
        z[35] = 1.0;
        assert_eq!(decode_orientation(&z, 5.0).unwrap(), 177.5);
        assert_eq!(decode_orientation(&[0.3; 36], 5.0).unwrap(), 2.5);
        assert_eq!(decode_orientation(&z[..35], 5.0), Err(DecodeError::LengthMismatch { expected: 36, found: 35 }));
        assert_eq!(decode_orientation(&z, 7.0), Err(DecodeError::InvalidBinWidth(7.0)));
    }

    #[test]
    fn single_detection_assembly() {
        let cfg = BevConfig::default();
        let mut r = HeadRasters::zeros(480, 480, 36);
        let (u, v) = (100, 240);
        let cell = u * 480 + v;
        r.heatmap[cell] = 0.95;
        r.orientation_logits[cell * 36 + 18] = 4.0;
        r.dims[cell * 2] = 1.8;
        r.dims[cell * 2 + 1] = 4.2;
        let out = assemble_detections(&r, &cfg, 0.3, 3, 5.0, 7).unwrap();
        assert_eq!(out.detections.len(), 1);
        let d = out.detections[0];
        assert_eq!(d.yaw_deg, 92.5);
        assert!((d.width - 1.8).abs() < 1e-6 && (d.length - 4.2).abs() < 1e-6);
        assert_eq!(d.center_xy, (12.5625, 0.0625));
        assert_eq!(d.frame_id, 7);
    }

    #[test]
    fn invalid_dims_are_dropped() {
        let cfg = BevConfig { x_max: 2.0, y_min: 0.0, y_max: 2.0, res_x: 0.25, res_y: 0.25, ..Default::default() };
        let mut r = HeadRasters::zeros(8, 8, 36);
        r.heatmap[9] = 0.9;
        r.heatmap[54] = 0.8;
        r.dims[54 * 2] = 1.0;
        r.dims[54 * 2 + 1] = 2.0;
        let out = assemble_detections(&r, &cfg, 0.3, 3, 5.0, 0).unwrap();
        assert_eq!(out.detections.len(), 1);
        assert_eq!(out.dropped_invalid_dims, 1);
        assert!(assemble_detections(&HeadRasters::zeros(4, 8, 36), &cfg, 0.3, 3, 5.0, 0).is_err());
        assert!(assemble_detections(&HeadRasters::zeros(8, 8, 18), &cfg, 0.3, 3, 5.0, 0).is_err());
    }

    #[test]
    fn detection_lines_round_trip() {
        let d = Detection {
            frame_id: 3,
            center_uv: (1, 2),
            center_xy: (0.1875, -29.6875),
            yaw_deg: 92.5,
            width: 1.8,
            length: 4.2,
            score: 0.75,
        };
        let text = format_detections(&[d]);
        assert_eq!(text, "3 0.1875 -29.6875 92.5 1.8 4.2 0.75\n");
        assert_eq!(parse_detections(&text).unwrap(), vec![DetectionRecord::from(&d)]);
        assert!(parse_detections("1 2 3").is_err());
    }
}
