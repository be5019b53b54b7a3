use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// False-positive-rate caps reported alongside the curve areas.
pub const FPR_LEVELS: [f64; 3] = [0.01, 0.005, 0.001];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetrics {
    pub auc_roc: f64,
    pub auc_pr: f64,
    /// `(θ, max TPR with FPR ≤ θ)` for each level in [`FPR_LEVELS`].
    pub tpr_at_fpr: Vec<(f64, f64)>,
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::dim("ranking metric", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::UndefinedMetric("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ranking metrics need both classes".into()));
    }
    Ok((pos, neg))
}

/// Descending-score order with tie groups: `(pos, neg)` counts per distinct score.
fn tie_groups(scores: &[f64], labels: &[u8]) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut last: Option<f64> = None;
    for i in idx {
        if last != Some(scores[i]) {
            groups.push((0, 0));
            last = Some(scores[i]);
        }
        let g = groups.last_mut().expect("pushed");
        if labels[i] == 1 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Mann–Whitney statistic; tied positive/negative pairs earn half credit.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let mut negatives_below = neg;
    let mut credit = 0.0;
    for (p, n) in tie_groups(scores, labels) {
        negatives_below -= n;
        credit += p as f64 * (negatives_below as f64 + 0.5 * n as f64);
    }
    Ok(credit / (pos as f64 * neg as f64))
}

/// Step-interpolated area under the precision/recall curve.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for (p, n) in tie_groups(scores, labels) {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// Largest TPR over thresholds whose FPR does not exceed `theta`.
pub fn tpr_at_fpr(scores: &[f64], labels: &[u8], theta: f64) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = 0.0;
    for (p, n) in tie_groups(scores, labels) {
        tp += p;
        fp += n;
        if fp as f64 / neg as f64 <= theta {
            best = tp as f64 / pos as f64;
        } else {
            break;
        }
    }
    Ok(best)
}

pub fn curve_metrics(scores: &[f64], labels: &[u8]) -> Result<CurveMetrics> {
    Ok(CurveMetrics {
        auc_roc: auc_roc(scores, labels)?,
        auc_pr: average_precision(scores, labels)?,
        tpr_at_fpr: FPR_LEVELS
            .iter()
            .map(|&t| Ok((t, tpr_at_fpr(scores, labels, t)?)))
            .collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let m = curve_metrics(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!((m.auc_roc, m.auc_pr), (1.0, 1.0));
        assert!(m.tpr_at_fpr.iter().all(|&(_, t)| t == 1.0));
    }

    #[test]
    fn tpr_with_tiny_cap() {
        assert_eq!(tpr_at_fpr(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0], 0.005).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_last_of_n() {
        let n = 7;
        let scores: Vec<f64> = (0..n).map(|i| 1.0 - i as f64 / n as f64).collect();
        let mut labels = vec![0u8; n];
        labels[n - 1] = 1;
        assert!((average_precision(&scores, &labels).unwrap() - 1.0 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn ties_get_half_credit() {
        assert_eq!(auc_roc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(curve_metrics(&[0.1, 0.2], &[1, 1]).is_err());
    }
}
