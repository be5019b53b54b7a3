use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor for binary cross-entropy; keeps `log(0)` out of reach.
pub const BCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    BinaryCrossEntropy,
    SoftmaxCrossEntropy,
}

/// Target of a loss evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Values(&'a [f64]),
    Class(usize),
}

/// Evaluates `kind` and returns `(loss, ∂loss/∂prediction)`.
pub fn loss_eval(kind: LossKind, prediction: &[f64], target: Target<'_>) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (LossKind::Mse, Target::Values(t)) => mse(prediction, t),
        (LossKind::BinaryCrossEntropy, Target::Values(t)) => {
            if prediction.len() != t.len() {
                return Err(Error::dim("bce", prediction.len(), t.len()));
            }
            let n = prediction.len() as f64;
            let mut total = 0.0;
            let mut grad = Vec::with_capacity(prediction.len());
            for (&p, &y) in prediction.iter().zip(t) {
                let (l, g) = bce(p, y);
                total += l / n;
                grad.push(g / n);
            }
            Ok((total, grad))
        }
        (LossKind::SoftmaxCrossEntropy, Target::Class(c)) => softmax_cross_entropy(prediction, c),
        (kind, _) => Err(Error::Usage(format!("target type does not match loss {kind:?}"))),
    }
}

/// Mean squared error over coordinates.
pub fn mse(prediction: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::dim("mse", prediction.len(), target.len()));
    }
    let n = prediction.len() as f64;
    let diff: Vec<f64> = prediction.iter().zip(target).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.iter().map(|d| 2.0 * d / n).collect()))
}

/// Binary cross-entropy of a probability `p` against label `y`; `p` is clamped to
/// `[BCE_FLOOR, 1 - BCE_FLOOR]`.
pub fn bce(p: f64, y: f64) -> (f64, f64) {
    let q = p.clamp(BCE_FLOOR, 1.0 - BCE_FLOOR);
    let loss = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
    let grad = -y / q + (1.0 - y) / (1.0 - q);
    (loss, grad)
}

/// Log-sum-exp stabilised cross-entropy of raw logits against a class index.
pub fn softmax_cross_entropy(logits: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
    if class >= logits.len() {
        return Err(Error::Usage(format!("class {class} out of range for {} logits", logits.len())));
    }
    let loss = (log_sum_exp(logits) - logits[class]).max(0.0);
    let mut grad = softmax(logits);
    grad[class] -= 1.0;
    Ok((loss, grad))
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
