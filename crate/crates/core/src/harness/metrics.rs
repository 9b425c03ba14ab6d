//! Classification and regression metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion-matrix rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Metrics on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n: usize,
    pub loglik: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classification: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse: Option<f64>,
}

/// Summary of a fitted posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Best smoothed lower bound.
    pub lb: f64,
    pub train: SplitMetrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test: Option<SplitMetrics>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::EmptyInput("metrics input"));
    }
    if a != b {
        return Err(Error::Dimension { expected: a, found: b });
    }
    Ok(())
}

/// Rates from thresholding `probs` at `threshold` (`p >= threshold` predicts 1).
///
/// Precision is 0 with no positive predictions, recall 0 with no positive
/// labels, and f1 is 0 when both are 0.
pub fn classification_metrics(labels: &[f64], probs: &[f64], threshold: f64) -> Result<ClassificationMetrics> {
    check_lengths(labels.len(), probs.len())?;
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (row, (&y, &p)) in labels.iter().zip(probs).enumerate() {
        let truth = match y {
            1.0 => true,
            0.0 => false,
            value => return Err(Error::InvalidLabel { row, value }),
        };
        match (p >= threshold, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy: ratio(tp + tn, labels.len()),
        precision,
        recall,
        f1,
    })
}

/// Mean squared error.
pub fn regression_metrics(targets: &[f64], fitted: &[f64]) -> Result<f64> {
    check_lengths(targets.len(), fitted.len())?;
    Ok(targets.iter().zip(fitted).map(|(t, f)| (t - f).powi(2)).sum::<f64>() / targets.len() as f64)
}
