use crate::error::{Error, Result};
use crate::kernel::dot;
use crate::kernel::loss::log_sum_exp;

/// Gradients of the dual-encoding loss with respect to every input.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveGrad {
    pub loss: f64,
    pub d_anchor: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negatives: Vec<Vec<f64>>,
}

/// `−log(exp(z·z⁺/τ) / Σ_k exp(z·z⁻_k/τ))`.
///
/// With `include_positive` the positive logit also enters the denominator,
/// which makes the loss the usual non-negative InfoNCE form.
pub fn contrastive_loss(
    anchor: &[f64],
    positive: &[f64],
    negatives: &[Vec<f64>],
    tau: f64,
    include_positive: bool,
) -> Result<ContrastiveGrad> {
    if negatives.is_empty() {
        return Err(Error::Usage("contrastive loss needs at least one negative".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let m = anchor.len();
    if positive.len() != m || negatives.iter().any(|n| n.len() != m) {
        return Err(Error::dim("contrastive_loss", m, "mismatched embedding"));
    }
    let pos_logit = dot(anchor, positive) / tau;
    let mut logits: Vec<f64> = negatives.iter().map(|n| dot(anchor, n) / tau).collect();
    if include_positive {
        logits.push(pos_logit);
    }
    let lse = log_sum_exp(&logits);
    let loss = lse - pos_logit;
    let weights: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();

    let mut w_pos = -1.0;
    if include_positive {
        w_pos += weights[negatives.len()];
    }
    let mut d_anchor: Vec<f64> = positive.iter().map(|p| w_pos * p / tau).collect();
    let mut d_negatives = Vec::with_capacity(negatives.len());
    for (n, &w) in negatives.iter().zip(&weights) {
        for (d, v) in d_anchor.iter_mut().zip(n) {
            *d += w * v / tau;
        }
        d_negatives.push(anchor.iter().map(|a| w * a / tau).collect());
    }
    Ok(ContrastiveGrad {
        loss,
        d_positive: anchor.iter().map(|a| w_pos * a / tau).collect(),
        d_anchor,
        d_negatives,
    })
}
