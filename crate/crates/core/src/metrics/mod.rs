//! Evaluation quantities: ranking metrics over scored sets, per-feature R²,
//! classification counts and repeat aggregation.

mod ranking;

use serde::{Deserialize, Serialize};

pub use ranking::{auc_roc, average_precision, curve_metrics, tpr_at_fpr, CurveMetrics, FPR_LEVELS};

use crate::error::{Error, Result};

/// Per-feature R² (`None` for zero-variance targets) with mean and best over
/// the defined features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub per_feature: Vec<Option<f64>>,
    pub mean: f64,
    pub best: f64,
}

/// `predictions` and `targets` are row-major: one row per sample.
pub fn regression_metrics(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<RegressionReport> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::dim("regression_metrics", predictions.len(), targets.len()));
    }
    let k = targets[0].len();
    if predictions.iter().chain(targets).any(|r| r.len() != k) {
        return Err(Error::Usage("ragged prediction or target rows".into()));
    }
    let n = targets.len() as f64;
    let per_feature: Vec<Option<f64>> = (0..k)
        .map(|j| {
            let mean = targets.iter().map(|r| r[j]).sum::<f64>() / n;
            let ss_tot: f64 = targets.iter().map(|r| (r[j] - mean).powi(2)).sum();
            if ss_tot <= 0.0 {
                return None;
            }
            let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (p[j] - t[j]).powi(2)).sum();
            Some(1.0 - ss_res / ss_tot)
        })
        .collect();
    let defined: Vec<f64> = per_feature.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric("every target feature has zero variance".into()));
    }
    Ok(RegressionReport {
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        best: defined.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        per_feature,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// Positive-class statistics; present only when every label is 0 or 1.
    pub binary: Option<BinaryReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// Set when precision + recall = 0 and the F-score was reported as 0.
    pub f_undefined: bool,
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("accuracy", predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn binary_metrics(predictions: &[usize], labels: &[usize]) -> Result<BinaryReport> {
    if predictions.len() != labels.len() {
        return Err(Error::dim("binary_metrics", predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("F-score of an empty set".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == 1, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f_undefined = precision + recall == 0.0;
    let f_score = if f_undefined {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryReport {
        precision,
        recall,
        f_score,
        f_undefined,
    })
}

pub fn classification_metrics(predictions: &[usize], labels: &[usize]) -> Result<ClassificationReport> {
    let accuracy = accuracy(predictions, labels)?;
    let binary = if labels.iter().chain(predictions).all(|&v| v <= 1) {
        Some(binary_metrics(predictions, labels)?)
    } else {
        None
    };
    Ok(ClassificationReport { accuracy, binary })
}

/// Mean, standard error and normal 95% interval over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub runs: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn aggregate_repeats(samples: &[f64]) -> Result<RepeatSummary> {
    if samples.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "aggregation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    // Summing in sorted order makes the summary independent of sample order.
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    Ok(RepeatSummary {
        runs: s.len(),
        mean,
        std_error,
        ci_low: mean - 1.96 * std_error,
        ci_high: mean + 1.96 * std_error,
    })
}
