//! Focal and smooth-L1 losses, masked box regression, and the rotating
//! five-task weighting.

use thiserror::Error;

/// Weight multiset, largest first.
pub const WEIGHT_SET: [f64; 5] = [0.98, 0.95, 0.90, 0.85, 0.80];

/// Task order used throughout: keypoint, box, rotation, semantic, motion.
pub const TASKS: [&str; 5] = ["kp", "box", "rot", "sem", "mot"];

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("probability {0} outside (0, 1]")]
    Domain(f64),
    #[error("gamma must be non-negative, got {0}")]
    NegativeGamma(f64),
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// `−(1 − p)^γ · ln p`.
pub fn focal_loss(p: f64, gamma: f64) -> Result<f64, LossError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(LossError::Domain(p));
    }
    if !(gamma >= 0.0) {
        return Err(LossError::NegativeGamma(gamma));
    }
    Ok(-(1.0 - p).powf(gamma) * p.ln())
}

/// Mean focal loss over probabilities of the correct class.
pub fn focal_loss_mean(probs: &[f64], gamma: f64) -> Result<f64, LossError> {
    if probs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for &p in probs {
        sum += focal_loss(p, gamma)?;
    }
    Ok(sum / probs.len() as f64)
}

/// Huber-style loss with transition at `|d| = β`. `beta` must be positive.
pub fn smooth_l1(y_hat: f64, y: f64, beta: f64) -> f64 {
    debug_assert!(beta > 0.0);
    let d = (y_hat - y).abs();
    if d < beta {
        0.5 * d * d / beta
    } else {
        d - 0.5 * beta
    }
}

/// Mean smooth-L1 over the elements of masked cells.
///
/// `pred` and `target` are `cells × channels` row-major; `mask` has one entry
/// per cell. An empty mask yields 0.
pub fn masked_box_loss(pred: &[f64], target: &[f64], mask: &[bool], beta: f64) -> Result<f64, LossError> {
    if !(beta > 0.0) {
        return Err(LossError::NonPositiveBeta(beta));
    }
    if pred.len() != target.len() {
        return Err(LossError::ShapeMismatch(format!("pred {} vs target {}", pred.len(), target.len())));
    }
    if mask.is_empty() || pred.len() % mask.len() != 0 {
        if mask.is_empty() && pred.is_empty() {
            return Ok(0.0);
        }
        return Err(LossError::ShapeMismatch(format!("{} values over {} mask cells", pred.len(), mask.len())));
    }
    let channels = pred.len() / mask.len();
    let (mut sum, mut n) = (0.0, 0usize);
    for (cell, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for k in cell * channels..(cell + 1) * channels {
            sum += smooth_l1(pred[k], target[k], beta);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Weights assigned to the five tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight per task, in [`TASKS`] order.
    pub weights: [f64; 5],
    /// `assignment[task]` indexes [`WEIGHT_SET`].
    pub assignment: [usize; 5],
}

impl LossWeights {
    /// Task `i` gets `WEIGHT_SET[i]`.
    pub fn in_task_order() -> Self {
        Self::from_assignment([0, 1, 2, 3, 4]).expect("identity permutation")
    }

    /// Builds weights from a permutation of `0..5`.
    pub fn from_assignment(assignment: [usize; 5]) -> Option<Self> {
        let mut seen = [false; 5];
        for &a in &assignment {
            if a >= 5 || std::mem::replace(&mut seen[a], true) {
                return None;
            }
        }
        Some(Self { weights: assignment.map(|a| WEIGHT_SET[a]), assignment })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::in_task_order()
    }
}

/// `Σ wᵢ · Lᵢ`.
pub fn total_loss(losses: &[f64; 5], weights: &LossWeights) -> f64 {
    losses.iter().zip(&weights.weights).map(|(l, w)| l * w).sum()
}

/// Rank-matches the weight set to the losses: the largest-magnitude loss gets
/// the largest weight. Ties keep task order.
pub fn rotate_weights(losses: &[f64; 5]) -> LossWeights {
    let mut order = [0usize, 1, 2, 3, 4];
    order.sort_by(|&a, &b| losses[b].abs().total_cmp(&losses[a].abs()));
    let mut assignment = [0usize; 5];
    for (rank, &task) in order.iter().enumerate() {
        assignment[task] = rank;
    }
    LossWeights::from_assignment(assignment).expect("ranks form a permutation")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_examples() {
        assert_eq!(focal_loss(1.0, 2.0).unwrap(), 0.0);
        assert!((focal_loss(0.5, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        // 0.01 · ln(1/0.9) = 1.05360515657826301227e-3
        assert!((focal_loss(0.9, 2.0).unwrap() - 1.053_605_156_578_263e-3).abs() < 1e-17);
        assert_eq!(focal_loss(0.0, 2.0), Err(LossError::Domain(0.0)));
        assert_eq!(focal_loss(1.5, 2.0), Err(LossError::Domain(1.5)));
        assert_eq!(focal_loss(0.5, -1.0), Err(LossError::NegativeGamma(-1.0)));
    }

    #[test]
    fn focal_mean() {
        assert_eq!(focal_loss_mean(&[], 2.0).unwrap(), 0.0);
        let m = focal_loss_mean(&[0.5, 1.0], 0.0).unwrap();
        assert!((m - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(3.0, 3.0, 1.0), 0.0);
        assert_eq!(smooth_l1(3.0, 1.0, 1.0), 1.5);
        assert_eq!(smooth_l1(0.5, 0.0, 1.0), 0.125);
        // Both branches give β/2 at |d| = β.
        let beta: f64 = 0.37;
        assert!((0.5 * beta * beta / beta - (beta - 0.5 * beta)).abs() < 1e-16);
        assert!((smooth_l1(beta, 0.0, beta) - 0.5 * beta).abs() < 1e-16);
    }

    #[test]
    fn masked_loss() {
        assert_eq!(masked_box_loss(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4], &[false, false], 1.0).unwrap(), 0.0);
        let pred = [1.0, 2.0, 5.0, 6.0];
        let target = [1.0, 2.0, 3.0, 4.0];
        let got = masked_box_loss(&pred, &target, &[false, true], 1.0).unwrap();
        assert_eq!(got, smooth_l1(2.0, 0.0, 1.0));
        assert!(masked_box_loss(&pred, &target[..3], &[true, true], 1.0).is_err());
        assert!(masked_box_loss(&pred, &target, &[true, true, true], 1.0).is_err());
        assert_eq!(masked_box_loss(&pred, &target, &[true, true], 0.0), Err(LossError::NonPositiveBeta(0.0)));
        assert_eq!(masked_box_loss(&[], &[], &[], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn totals() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&[0.0; 5], &w), 0.0);
        assert!((total_loss(&[1.0; 5], &w) - 4.48).abs() < 1e-12);
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotate_weights(&[5.0, 4.0, 3.0, 2.0, 1.0]).weights, WEIGHT_SET);
        let mut rev = WEIGHT_SET;
        rev.reverse();
        assert_eq!(rotate_weights(&[1.0, 2.0, 3.0, 4.0, 5.0]).weights, rev);
        // Ties keep task order; magnitude decides.
        assert_eq!(rotate_weights(&[1.0, 1.0, -3.0, 0.0, 1.0]).assignment, [1, 2, 0, 4, 3]);
    }

    #[test]
    fn assignment_must_be_permutation() {
        assert!(LossWeights::from_assignment([0, 0, 1, 2, 3]).is_none());
        assert!(LossWeights::from_assignment([0, 1, 2, 3, 5]).is_none());
    }
}
