//! OTB-protocol success and precision curves.
//!
//! Success at threshold `t` counts frames with IoU strictly greater than `t`
//! over 21 thresholds `0, 0.05, .., 1`; its mean is the AUC. Precision at `t`
//! counts frames whose center error is at most `t` pixels for `t = 0..=50`.
//! A missing prediction or a missing ground truth scores IoU 0 and infinite
//! center error, except when both are missing: the tracker correctly reports
//! the target gone and the frame counts as a hit at every threshold.

use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{center_distance, iou, BBox};

pub const SUCCESS_POINTS: usize = 21;
pub const PRECISION_POINTS: usize = 51;
pub const PRECISION_HEADLINE_PX: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction count {predicted} does not match ground-truth count {ground_truth}")]
    LengthMismatch { predicted: usize, ground_truth: usize },
    #[error("no frames to evaluate")]
    Empty,
}

/// IoU threshold `i` of the success curve; `i / 20` is the closest double to
/// the decimal value.
pub fn success_threshold(i: usize) -> f64 {
    i as f64 / 20.0
}

pub fn precision_threshold(i: usize) -> f64 {
    i as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub frames: usize,
    pub success_curve: Vec<f64>,
    pub success_auc: f64,
    pub precision_curve: Vec<f64>,
    pub precision_at_20: f64,
}

/// Per-frame `(iou, center_error)` with the absence rules applied; `None`
/// marks a frame where both sides agree the target is absent.
fn frame_scores(pred: &Option<BBox>, gt: &Option<BBox>) -> Option<(f64, f64)> {
    match (pred, gt) {
        (Some(p), Some(g)) => Some((iou(p, g), center_distance(p, g))),
        (None, None) => None,
        _ => Some((0.0, f64::INFINITY)),
    }
}

pub fn compute_metrics(predicted: &[Option<BBox>], ground_truth: &[Option<BBox>]) -> Result<MetricReport, MetricsError> {
    if predicted.len() != ground_truth.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            ground_truth: ground_truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut success = [0usize; SUCCESS_POINTS];
    let mut precision = [0usize; PRECISION_POINTS];
    for (p, g) in predicted.iter().zip(ground_truth) {
        match frame_scores(p, g) {
            None => {
                success.iter_mut().for_each(|s| *s += 1);
                precision.iter_mut().for_each(|s| *s += 1);
            }
            Some((o, d)) => {
                for (i, s) in success.iter_mut().enumerate() {
                    if o > success_threshold(i) {
                        *s += 1;
                    }
                }
                for (i, s) in precision.iter_mut().enumerate() {
                    if d <= precision_threshold(i) {
                        *s += 1;
                    }
                }
            }
        }
    }
    let n = predicted.len() as f64;
    let success_curve: Vec<f64> = success.iter().map(|&c| c as f64 / n).collect();
    let precision_curve: Vec<f64> = precision.iter().map(|&c| c as f64 / n).collect();
    Ok(MetricReport {
        frames: predicted.len(),
        success_auc: success_curve.iter().sum::<f64>() / SUCCESS_POINTS as f64,
        precision_at_20: precision_curve[PRECISION_HEADLINE_PX],
        success_curve,
        precision_curve,
    })
}

/// Unweighted mean over sequences, point by point (the OTB aggregate).
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = reports.len() as f64;
    let mean_curve = |pick: fn(&MetricReport) -> &Vec<f64>, len: usize| -> Vec<f64> {
        (0..len).map(|i| reports.iter().map(|r| pick(r)[i]).sum::<f64>() / k).collect()
    };
    let success_curve = mean_curve(|r| &r.success_curve, SUCCESS_POINTS);
    let precision_curve = mean_curve(|r| &r.precision_curve, PRECISION_POINTS);
    Ok(MetricReport {
        frames: reports.iter().map(|r| r.frames).sum(),
        success_auc: success_curve.iter().sum::<f64>() / SUCCESS_POINTS as f64,
        precision_at_20: precision_curve[PRECISION_HEADLINE_PX],
        success_curve,
        precision_curve,
    })
}
