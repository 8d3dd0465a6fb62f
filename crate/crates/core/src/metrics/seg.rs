//! Per-class segmentation IoU over BEV cells or points.

use serde::Serialize;

use super::MetricsError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// `TP / (TP + FP + FN)`, undefined when the class is absent from both rasters.
    pub fn iou(&self) -> Option<f64> {
        let denom = self.tp + self.fp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassIou {
    pub class: u32,
    pub counts: ConfusionCounts,
    pub iou: Option<f64>,
}

pub fn segmentation_iou(pred: &[u32], gt: &[u32], classes: &[u32]) -> Result<Vec<ClassIou>, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::ShapeMismatch(format!("pred {} vs gt {}", pred.len(), gt.len())));
    }
    let mut counts = vec![ConfusionCounts::default(); classes.len()];
    let slot = |c: u32| classes.iter().position(|&k| k == c);
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            if let Some(i) = slot(p) {
                counts[i].tp += 1;
            }
            continue;
        }
        if let Some(i) = slot(p) {
            counts[i].fp += 1;
        }
        if let Some(i) = slot(g) {
            counts[i].fn_ += 1;
        }
    }
    Ok(classes
        .iter()
        .zip(counts)
        .map(|(&class, counts)| ClassIou { class, counts, iou: counts.iou() })
        .collect())
}

/// Mean over classes with a defined IoU; `None` when no class is defined.
pub fn mean_iou(per_class: &[ClassIou]) -> Option<f64> {
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.iou).collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}
