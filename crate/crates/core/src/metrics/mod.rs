//! Evaluation: rotated-box IoU, average precision, segmentation IoU and
//! latency benchmarking.

pub mod ap;
pub mod bench;
pub mod iou;
pub mod seg;

pub use ap::{average_precision, ApOptions, ApResult, GtBox, ScoredBox};
pub use bench::{latency_bench, EnvFingerprint, LatencyReport};
pub use iou::{rotated_iou, RotatedBox};
pub use seg::{segmentation_iou, ClassIou, ConfusionCounts};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite score at detection {0}")]
    NonFiniteScore(usize),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}
