use std::collections::BTreeSet;
use std::path::Path;

use bevkit::heads::read_detections;
use bevkit::metrics::ap::parse_ground_truth;
use bevkit::metrics::seg::mean_iou;
use bevkit::metrics::{average_precision, segmentation_iou, ClassIou, EnvFingerprint, ScoredBox};
use bevkit::pointcloud::parse_labels;
use bevkit::BevGrid;
use serde::Serialize;

use super::{emit_report, require_file};
use crate::config::RunConfig;
use crate::output::{file_name, Provenance};
use crate::{CliError, Outcome};

#[derive(Debug, Serialize)]
struct Report<M: Serialize> {
    #[serde(flatten)]
    provenance: Provenance,
    environment: EnvFingerprint,
    inputs: Vec<String>,
    metrics: M,
}

#[derive(Debug, Serialize)]
struct ApMetrics {
    iou_threshold: f64,
    max_difficulty: Option<u8>,
    recall_points: usize,
    detections: usize,
    ap: f64,
    num_gt: usize,
    true_positives: usize,
    false_positives: usize,
    ignored_detections: usize,
}

pub fn run_ap(cfg: &RunConfig, dets: &Path, gt: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    require_file(dets)?;
    require_file(gt)?;
    let records = read_detections(dets).map_err(|e| CliError::Input(format!("{}: {e}", dets.display())))?;
    let gt_text = std::fs::read_to_string(gt).map_err(|e| CliError::Input(format!("{}: {e}", gt.display())))?;
    let gts = parse_ground_truth(&gt_text).map_err(|e| CliError::Input(format!("{}: {e}", gt.display())))?;
    let boxes: Vec<ScoredBox> = records.iter().map(ScoredBox::from).collect();
    let opts = cfg.eval.ap_options();
    let r = average_precision(&boxes, &gts, &opts).map_err(|e| CliError::Input(e.to_string()))?;
    let report = Report {
        provenance: Provenance::new("eval-ap", cfg.hash()),
        environment: EnvFingerprint::current(),
        inputs: vec![file_name(dets), file_name(gt)],
        metrics: ApMetrics {
            iou_threshold: opts.iou_threshold,
            max_difficulty: opts.max_difficulty,
            recall_points: opts.recall_points,
            detections: boxes.len(),
            ap: r.ap,
            num_gt: r.num_gt,
            true_positives: r.true_positives,
            false_positives: r.false_positives,
            ignored_detections: r.ignored_detections,
        },
    };
    emit_report(&report, out)?;
    eprintln!("eval ap: {:.6} ({} tp, {} fp, {} gt)", r.ap, r.true_positives, r.false_positives, r.num_gt);
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct SegMetrics {
    cells: usize,
    mean_iou: Option<f64>,
    classes: Vec<ClassIou>,
}

/// Class ids from a `.label` file or a single-channel `.bevg` raster.
fn read_classes(path: &Path) -> Result<Vec<u32>, CliError> {
    let bad = |e: String| CliError::Input(format!("{}: {e}", path.display()));
    let bytes = std::fs::read(path).map_err(|e| bad(e.to_string()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("label") => {
            let labels = parse_labels(&bytes, bytes.len() / 4).map_err(|e| bad(e.to_string()))?;
            Ok(labels.semantic_class.iter().map(|&c| c as u32).collect())
        }
        Some("bevg") => {
            let grid = BevGrid::decode(&bytes).map_err(|e| bad(e.to_string()))?;
            let (_, _, c) = grid.shape();
            if c != 1 {
                return Err(bad(format!("class raster must have one channel, found {c}")));
            }
            grid.data
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f32 {
                        Ok(v as u32)
                    } else {
                        Err(bad(format!("cell value {v} is not a class id")))
                    }
                })
                .collect()
        }
        _ => Err(bad("expected a .label or .bevg file".into())),
    }
}

pub fn run_seg(cfg: &RunConfig, pred: &Path, gt: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    require_file(pred)?;
    require_file(gt)?;
    let p = read_classes(pred)?;
    let g = read_classes(gt)?;
    let classes: Vec<u32> = if cfg.eval.classes.is_empty() {
        p.iter().chain(&g).copied().collect::<BTreeSet<u32>>().into_iter().collect()
    } else {
        cfg.eval.classes.clone()
    };
    let per_class = segmentation_iou(&p, &g, &classes).map_err(|e| CliError::Input(e.to_string()))?;
    let report = Report {
        provenance: Provenance::new("eval-seg-iou", cfg.hash()),
        environment: EnvFingerprint::current(),
        inputs: vec![file_name(pred), file_name(gt)],
        metrics: SegMetrics { cells: p.len(), mean_iou: mean_iou(&per_class), classes: per_class },
    };
    emit_report(&report, out)?;
    Ok(Outcome::Success)
}
