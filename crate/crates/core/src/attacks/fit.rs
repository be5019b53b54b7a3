use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{loss_eval, Activation, LayerSpec, LossKind, Mlp, Optimizer, OptimizerKind, Parameterized, Target};
use crate::rng::Rng;

/// Per-column affine standardisation fitted on attacker-visible rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Usage("no rows to standardise".into()))?;
        let (n, k) = (rows.len() as f64, first.len());
        let mean: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..k)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-24 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Labels<'a> {
    Values(&'a [Vec<f64>]),
    Classes(&'a [usize], usize),
    Binary(&'a [u8]),
}

impl Labels<'_> {
    fn len(&self) -> usize {
        match self {
            Labels::Values(v) => v.len(),
            Labels::Classes(c, _) => c.len(),
            Labels::Binary(b) => b.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Dropout after each hidden layer during training.
    pub dropout: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 20,
            batch_size: 256,
            lr: 0.001,
            dropout: 0.0,
        }
    }
}

/// A trained attack network together with its input scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub mlp: Mlp,
    pub scaler: Standardizer,
}

impl Fitted {
    pub fn predict(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.mlp.infer(&self.scaler.apply(row))
    }
}

/// Trains an MLP on `rows` with Adam and mini-batches; the loss follows
/// from the label type.
pub fn fit(rows: &[Vec<f64>], labels: Labels<'_>, cfg: &FitConfig, rng: &mut Rng) -> Result<Fitted> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::dim("fit", rows.len(), labels.len()));
    }
    let scaler = Standardizer::fit(rows)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r)).collect();
    let (out, act, kind) = match labels {
        Labels::Values(v) => (v[0].len(), Activation::Identity, LossKind::Mse),
        Labels::Classes(_, k) => (k, Activation::Identity, LossKind::SoftmaxCrossEntropy),
        Labels::Binary(_) => (1, Activation::Sigmoid, LossKind::BinaryCrossEntropy),
    };
    let mut specs: Vec<LayerSpec> = cfg.hidden.iter().map(|&w| LayerSpec::new(w, Activation::Relu, cfg.dropout)).collect();
    specs.push(LayerSpec::new(out, act, 0.0));
    let mut mlp = Mlp::new(x[0].len(), &specs, rng);
    let mut opt = Optimizer::new(OptimizerKind::Adam, mlp.num_params());
    let mut grad = mlp.zeros_like();
    let mut order: Vec<usize> = (0..x.len()).collect();
    let binary: Vec<[f64; 1]>;
    let bin_ref = match labels {
        Labels::Binary(b) => {
            binary = b.iter().map(|&y| [y as f64]).collect();
            Some(&binary)
        }
        _ => None,
    };
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            grad.zero();
            for &i in batch {
                let (y, mut tape) = if cfg.dropout > 0.0 {
                    mlp.forward(&x[i], Some(&mut *rng))?
                } else {
                    mlp.forward(&x[i], None)?
                };
                let target = match labels {
                    Labels::Values(v) => Target::Values(&v[i]),
                    Labels::Classes(c, _) => Target::Class(c[i]),
                    Labels::Binary(_) => Target::Values(&bin_ref.expect("binary labels")[i]),
                };
                let (_, dy) = loss_eval(kind, &y, target)?;
                mlp.backward(&mut tape, &dy, &mut grad)?;
            }
            grad.scale_all(1.0 / batch.len() as f64);
            opt.step(&mut mlp, &grad, cfg.lr)?;
        }
    }
    Ok(Fitted { mlp, scaler })
}

/// Deterministic split of `0..n` into (fit, holdout) index sets.
pub(crate) fn holdout_split(n: usize, fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = if n < 2 {
        0
    } else {
        ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
    };
    let hold = idx.split_off(n - k);
    (idx, hold)
}
