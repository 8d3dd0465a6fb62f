//! Average precision with greedy matching and 40-point interpolation.

use std::fmt::Write as _;

use serde::Serialize;

use super::iou::{rotated_iou, RotatedBox};
use super::MetricsError;
use crate::heads::DetectionRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub frame: u64,
    pub score: f64,
    pub bbox: RotatedBox,
}

impl From<&DetectionRecord> for ScoredBox {
    fn from(d: &DetectionRecord) -> Self {
        Self {
            frame: d.frame_id,
            score: d.score,
            bbox: RotatedBox::new(d.cx, d.cy, d.width, d.length, d.yaw_deg),
        }
    }
}

/// Ground-truth box with an externally supplied difficulty level
/// (0 = easy, 1 = moderate, 2 = hard by convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtBox {
    pub frame: u64,
    pub bbox: RotatedBox,
    pub difficulty: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApOptions {
    /// A detection is a true positive when IoU exceeds this value.
    pub iou_threshold: f64,
    /// Ground truths above this difficulty are ignored: they count as
    /// neither hits nor misses, and detections matching them are discarded.
    pub max_difficulty: Option<u8>,
    pub recall_points: usize,
}

impl Default for ApOptions {
    fn default() -> Self {
        Self { iou_threshold: 0.5, max_difficulty: None, recall_points: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub ap: f64,
    pub num_gt: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub ignored_detections: usize,
    /// Precision after each counted detection, in ranking order.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

/// Greedy matching in descending score order; each ground truth is matched at
/// most once, to the unmatched box of highest IoU in the same frame. Equal
/// scores are ranked by frame id, then by position in `dets`.
pub fn average_precision(dets: &[ScoredBox], gts: &[GtBox], opts: &ApOptions) -> Result<ApResult, MetricsError> {
    for (i, d) in dets.iter().enumerate() {
        if !d.score.is_finite() {
            return Err(MetricsError::NonFiniteScore(i));
        }
        d.bbox.validate()?;
    }
    for g in gts {
        g.bbox.validate()?;
    }
    let counted = |g: &GtBox| opts.max_difficulty.is_none_or(|m| g.difficulty <= m);
    let num_gt = gts.iter().filter(|g| counted(g)).count();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b].score.total_cmp(&dets[a].score).then(dets[a].frame.cmp(&dets[b].frame)).then(a.cmp(&b))
    });

    let mut matched = vec![false; gts.len()];
    let (mut tp, mut fp, mut ignored) = (0usize, 0usize, 0usize);
    let mut precision = Vec::with_capacity(dets.len());
    let mut recall = Vec::with_capacity(dets.len());
    for &i in &order {
        let det = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        let mut hits_ignored = false;
        for (j, g) in gts.iter().enumerate() {
            if g.frame != det.frame {
                continue;
            }
            let iou = rotated_iou(&det.bbox, &g.bbox)?;
            if !counted(g) {
                hits_ignored |= iou > opts.iou_threshold;
                continue;
            }
            if matched[j] {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, iou)) if iou > opts.iou_threshold => {
                matched[j] = true;
                tp += 1;
            }
            _ if hits_ignored => {
                ignored += 1;
                continue;
            }
            _ => fp += 1,
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 });
    }

    let ap = interpolated_ap(&precision, &recall, opts.recall_points, num_gt);
    Ok(ApResult {
        ap,
        num_gt,
        true_positives: tp,
        false_positives: fp,
        ignored_detections: ignored,
        precision,
        recall,
    })
}

/// Mean over `r = k/n, k = 1..=n` of the best precision at recall ≥ r.
pub fn interpolated_ap(precision: &[f64], recall: &[f64], points: usize, num_gt: usize) -> f64 {
    if num_gt == 0 || points == 0 {
        return 0.0;
    }
    // Envelope from the right: best precision at or after each rank.
    let mut envelope = precision.to_vec();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    let mut cursor = 0;
    for k in 1..=points {
        let r = k as f64 / points as f64;
        while cursor < recall.len() && recall[cursor] < r - 1e-12 {
            cursor += 1;
        }
        if cursor < recall.len() {
            sum += envelope[cursor];
        }
    }
    sum / points as f64
}

/// Parses ground truth lines: `frame_id cx cy yaw_deg width length difficulty`.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GtBox>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| MetricsError::MalformedLine { line: i + 1, reason };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")));
        out.push(GtBox {
            frame: f[0].parse().map_err(|_| bad(format!("bad frame id {:?}", f[0])))?,
            bbox: RotatedBox::new(num(f[1])?, num(f[2])?, num(f[4])?, num(f[5])?, num(f[3])?),
            difficulty: f[6].parse().map_err(|_| bad(format!("bad difficulty {:?}", f[6])))?,
        });
    }
    Ok(out)
}

pub fn format_ground_truth(gts: &[GtBox]) -> String {
    let mut s = String::new();
    for g in gts {
        let b = &g.bbox;
        let _ = writeln!(s, "{} {:?} {:?} {:?} {:?} {:?} {}", g.frame, b.cx, b.cy, b.yaw_deg, b.width, b.length, g.difficulty);
    }
    s
}
