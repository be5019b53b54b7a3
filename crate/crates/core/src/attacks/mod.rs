//! Inference-time attacks on released profiles: embedding inversion,
//! attribute inference and membership inference, each reported next to a
//! baseline. Attack networks are trained only on the attacker's auxiliary
//! partition; the evaluation partition sits behind an access log.

mod fit;
mod partition;
mod population;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use fit::{fit, FitConfig, Fitted, Labels, Standardizer};
pub use partition::Hidden;
pub use population::{assemble, sample_population, AttributeKind};

use crate::data::AccountId;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, binary_metrics, regression_metrics, RegressionReport};
use crate::rng::{stream, tags, Rng};

/// One released profile together with the ground truth an attack targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSample {
    pub account: AccountId,
    pub timestamp: i64,
    pub profile: Vec<f64>,
    /// Numeric features of the final transaction in the released history.
    pub targets: Vec<f64>,
    pub attribute: usize,
    /// Whether the profile's transaction belongs to the training split.
    pub member: bool,
    /// Transaction features of the account's most recent transactions in scope.
    pub context: Vec<Vec<f64>>,
    pub context_labels: Vec<u8>,
}

/// Attacker-visible auxiliary tuples plus the hidden evaluation partition.
#[derive(Debug)]
pub struct AttackDataset {
    pub aux: Vec<AttackSample>,
    pub eval: Hidden<Vec<AttackSample>>,
    pub classes: usize,
}

impl AttackDataset {
    /// Splits by account into halves, so no account appears on both sides,
    /// then balances membership within each half.
    pub fn partition(samples: Vec<AttackSample>, classes: usize, seed: u64) -> Result<Self> {
        let mut accounts: Vec<AccountId> = samples.iter().map(|s| s.account).collect();
        accounts.sort_unstable();
        accounts.dedup();
        let mut rng = stream(seed, &[tags::ATTACK, 0xA0]);
        accounts.shuffle(&mut rng);
        let aux_accounts: std::collections::HashSet<AccountId> = accounts[..accounts.len() / 2].iter().copied().collect();
        let (aux, eval): (Vec<_>, Vec<_>) = samples.into_iter().partition(|s| aux_accounts.contains(&s.account));
        let (aux, eval) = (balance(aux), balance(eval));
        if aux.is_empty() || eval.is_empty() {
            return Err(Error::Config("attack population too small to partition".into()));
        }
        Ok(Self {
            aux,
            eval: Hidden::new(eval),
            classes,
        })
    }
}

/// Keeps equally many members and non-members, dropping the latest surplus.
fn balance(samples: Vec<AttackSample>) -> Vec<AttackSample> {
    let members = samples.iter().filter(|s| s.member).count();
    let k = members.min(samples.len() - members);
    let (mut m, mut n) = (0, 0);
    samples
        .into_iter()
        .filter(|s| {
            let c = if s.member { &mut m } else { &mut n };
            *c += 1;
            *c <= k
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub model: FitConfig,
    pub shadow: FitConfig,
    /// Dropout-active passes per profile for shadow statistics.
    pub shadow_passes: usize,
    /// Share of auxiliary data held back to choose between the trained
    /// network and the data-free prior.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            model: FitConfig::default(),
            shadow: FitConfig {
                hidden: vec![128, 64, 32],
                dropout: 0.1,
                ..FitConfig::default()
            },
            shadow_passes: 16,
            holdout: 0.2,
            seed: 7,
        }
    }
}

impl AttackConfig {
    fn rng(&self, attack: u64) -> Rng {
        stream(self.seed, &[tags::ATTACK, attack])
    }
}

/// Which predictor the attacker settled on after the auxiliary holdout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Candidate {
    Network,
    Prior,
}

fn choose(network: f64, prior: f64) -> Candidate {
    if network > prior {
        Candidate::Network
    } else {
        Candidate::Prior
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub report: RegressionReport,
    pub selected: Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierResult {
    pub metric: f64,
    pub baseline: f64,
    pub selected: Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub inversion: InversionResult,
    pub attribute: ClassifierResult,
    pub membership: ClassifierResult,
}

fn column_means(rows: &[&Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

fn majority(labels: impl Iterator<Item = usize>, classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    for l in labels {
        counts[l] += 1;
    }
    // Ties resolve to the smallest class index.
    (0..classes).rev().max_by_key(|&c| counts[c]).unwrap_or(0)
}

/// Trains `Υ: ℝᵐ → ℝᵏ` on auxiliary profiles by MSE and reports R² on the
/// hidden partition.
pub fn attack_inversion(aux: &[AttackSample], eval: &Hidden<Vec<AttackSample>>, cfg: &AttackConfig) -> Result<InversionResult> {
    let mut rng = cfg.rng(1);
    let (fit_idx, hold_idx) = fit::holdout_split(aux.len(), cfg.holdout, &mut rng);
    let rows = |idx: &[usize]| idx.iter().map(|&i| aux[i].profile.clone()).collect::<Vec<_>>();
    let targets = |idx: &[usize]| idx.iter().map(|&i| aux[i].targets.clone()).collect::<Vec<_>>();
    let model = fit(&rows(&fit_idx), Labels::Values(&targets(&fit_idx)), &cfg.model, &mut rng)?;
    let prior = column_means(&fit_idx.iter().map(|&i| &aux[i].targets).collect::<Vec<_>>());

    let selected = if hold_idx.is_empty() {
        Candidate::Network
    } else {
        let t = targets(&hold_idx);
        let net: Vec<Vec<f64>> = hold_idx.iter().map(|&i| model.predict(&aux[i].profile)).collect::<Result<_>>()?;
        let flat = vec![prior.clone(); hold_idx.len()];
        let score = |p: &[Vec<f64>]| regression_metrics(p, &t).map(|r| r.mean).unwrap_or(f64::NEG_INFINITY);
        choose(score(&net), score(&flat))
    };

    let eval = eval.reveal("evaluate:inversion");
    let preds: Vec<Vec<f64>> = match selected {
        Candidate::Network => eval.iter().map(|s| model.predict(&s.profile)).collect::<Result<_>>()?,
        Candidate::Prior => vec![prior; eval.len()],
    };
    let truth: Vec<Vec<f64>> = eval.iter().map(|s| s.targets.clone()).collect();
    Ok(InversionResult {
        report: regression_metrics(&preds, &truth)?,
        selected,
    })
}

/// Trains a softmax classifier `Υ: ℝᵐ → Δ^{|A|−1}` and reports top-1
/// accuracy next to the frequency baseline.
pub fn attack_attribute_inference(
    aux: &[AttackSample],
    eval: &Hidden<Vec<AttackSample>>,
    classes: usize,
    cfg: &AttackConfig,
) -> Result<ClassifierResult> {
    if classes < 2 {
        return Err(Error::Config(format!("attribute needs at least two classes, got {classes}")));
    }
    let mut rng = cfg.rng(2);
    let (fit_idx, hold_idx) = fit::holdout_split(aux.len(), cfg.holdout, &mut rng);
    let rows: Vec<Vec<f64>> = fit_idx.iter().map(|&i| aux[i].profile.clone()).collect();
    let labels: Vec<usize> = fit_idx.iter().map(|&i| aux[i].attribute).collect();
    let model = fit(&rows, Labels::Classes(&labels, classes), &cfg.model, &mut rng)?;
    let prior = majority(labels.iter().copied(), classes);
    let argmax = |v: Vec<f64>| (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b });

    let selected = if hold_idx.is_empty() {
        Candidate::Network
    } else {
        let truth: Vec<usize> = hold_idx.iter().map(|&i| aux[i].attribute).collect();
        let net: Vec<usize> = hold_idx.iter().map(|&i| model.predict(&aux[i].profile).map(argmax)).collect::<Result<_>>()?;
        choose(accuracy(&net, &truth)?, accuracy(&vec![prior; truth.len()], &truth)?)
    };

    let eval = eval.reveal("evaluate:attribute");
    let truth: Vec<usize> = eval.iter().map(|s| s.attribute).collect();
    let preds: Vec<usize> = match selected {
        Candidate::Network => eval.iter().map(|s| model.predict(&s.profile).map(argmax)).collect::<Result<_>>()?,
        Candidate::Prior => vec![prior; eval.len()],
    };
    Ok(ClassifierResult {
        metric: accuracy(&preds, &truth)?,
        baseline: baseline(BaselineKind::FrequencyClassifier, eval)?,
        selected,
    })
}

/// Attacker's stand-in for the victim scorer: trained on auxiliary members'
/// transactions with their profile, dropout kept for stochastic passes.
pub fn train_shadow(aux: &[AttackSample], cfg: &AttackConfig) -> Result<Fitted> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for s in aux.iter().filter(|s| s.member) {
        for (x, &y) in s.context.iter().zip(&s.context_labels) {
            rows.push(shadow_input(&s.profile, x));
            labels.push(y);
        }
    }
    if rows.is_empty() {
        return Err(Error::Config("no auxiliary member transactions to train a shadow on".into()));
    }
    fit(&rows, Labels::Binary(&labels), &cfg.shadow, &mut cfg.rng(3))
}

fn shadow_input(profile: &[f64], x: &[f64]) -> Vec<f64> {
    let mut v = profile.to_vec();
    v.extend_from_slice(x);
    v
}

/// `(μ_s, σ_s)` over every (transaction, pass) score of `passes` stochastic
/// shadow evaluations. With no dropout in the shadow the passes coincide.
pub fn shadow_scores(shadow: &Fitted, profile: &[f64], context: &[Vec<f64>], passes: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    if context.is_empty() {
        return Err(Error::Usage("account has no transactions in scope".into()));
    }
    if passes < 2 {
        return Err(Error::Config(format!("need at least two shadow passes, got {passes}")));
    }
    let mut scores = Vec::with_capacity(passes * context.len());
    for x in context {
        let input = shadow.scaler.apply(&shadow_input(profile, x));
        for _ in 0..passes {
            scores.push(shadow.mlp.forward(&input, Some(&mut *rng))?.0[0]);
        }
    }
    // Deviations are taken from the first score so identical passes give an
    // exact zero spread.
    let n = scores.len() as f64;
    let shift = scores[0];
    let d_mean = scores.iter().map(|s| s - shift).sum::<f64>() / n;
    let d_sq = scores.iter().map(|s| (s - shift).powi(2)).sum::<f64>() / n;
    Ok((shift + d_mean, (d_sq - d_mean * d_mean).max(0.0).sqrt()))
}

fn membership_features(shadow: &Fitted, samples: &[AttackSample], passes: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(seed, &[tags::ATTACK, 4, i as u64]);
            let (mu, sigma) = shadow_scores(shadow, &s.profile, &s.context, passes, &mut rng)?;
            let mut row = s.profile.clone();
            row.push(mu);
            row.push(sigma);
            Ok(row)
        })
        .collect()
}

/// Binary classifier over `(z, μ_s, σ_s)` reporting the F-score at
/// threshold 0.5 next to the always-positive baseline.
pub fn attack_membership(aux: &[AttackSample], eval: &Hidden<Vec<AttackSample>>, cfg: &AttackConfig) -> Result<ClassifierResult> {
    let shadow = train_shadow(aux, cfg)?;
    let features = membership_features(&shadow, aux, cfg.shadow_passes, cfg.seed)?;
    let labels: Vec<u8> = aux.iter().map(|s| s.member as u8).collect();
    let mut rng = cfg.rng(5);
    let (fit_idx, hold_idx) = fit::holdout_split(aux.len(), cfg.holdout, &mut rng);
    let rows: Vec<Vec<f64>> = fit_idx.iter().map(|&i| features[i].clone()).collect();
    let fit_labels: Vec<u8> = fit_idx.iter().map(|&i| labels[i]).collect();
    let model = fit(&rows, Labels::Binary(&fit_labels), &cfg.model, &mut rng)?;
    let decide = |row: &[f64]| model.predict(row).map(|p| (p[0] >= 0.5) as usize);
    let f_score = |preds: &[usize], truth: &[usize]| binary_metrics(preds, truth).map(|b| b.f_score);

    let selected = if hold_idx.is_empty() {
        Candidate::Network
    } else {
        let truth: Vec<usize> = hold_idx.iter().map(|&i| labels[i] as usize).collect();
        let net: Vec<usize> = hold_idx.iter().map(|&i| decide(&features[i])).collect::<Result<_>>()?;
        choose(f_score(&net, &truth)?, f_score(&vec![1; truth.len()], &truth)?)
    };

    let eval = eval.reveal("evaluate:membership");
    let truth: Vec<usize> = eval.iter().map(|s| s.member as usize).collect();
    if truth.iter().all(|&t| t == truth[0]) {
        return Err(Error::UndefinedMetric("membership evaluation set has a single class".into()));
    }
    let preds: Vec<usize> = match selected {
        Candidate::Network => {
            let f = membership_features(&shadow, eval, cfg.shadow_passes, cfg.seed ^ 0x5EED)?;
            f.iter().map(|r| decide(r)).collect::<Result<_>>()?
        }
        Candidate::Prior => vec![1; eval.len()],
    };
    Ok(ClassifierResult {
        metric: f_score(&preds, &truth)?,
        baseline: baseline(BaselineKind::AlwaysPositive, eval)?,
        selected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    FrequencyClassifier,
    AlwaysPositive,
    ZeroR2,
}

/// Data-free reference metric on the evaluation samples.
pub fn baseline(kind: BaselineKind, eval: &[AttackSample]) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Usage("empty evaluation set".into()));
    }
    match kind {
        BaselineKind::FrequencyClassifier => {
            let classes = eval.iter().map(|s| s.attribute).max().unwrap_or(0) + 1;
            let truth: Vec<usize> = eval.iter().map(|s| s.attribute).collect();
            let mode = majority(truth.iter().copied(), classes);
            accuracy(&vec![mode; truth.len()], &truth)
        }
        BaselineKind::AlwaysPositive => {
            let truth: Vec<usize> = eval.iter().map(|s| s.member as usize).collect();
            Ok(binary_metrics(&vec![1; truth.len()], &truth)?.f_score)
        }
        BaselineKind::ZeroR2 => {
            let truth: Vec<Vec<f64>> = eval.iter().map(|s| s.targets.clone()).collect();
            let means = column_means(&truth.iter().collect::<Vec<_>>());
            Ok(regression_metrics(&vec![means; truth.len()], &truth)?.mean)
        }
    }
}

/// Runs all three attacks on one dataset.
pub fn run_attacks(data: &AttackDataset, cfg: &AttackConfig) -> Result<AttackReport> {
    Ok(AttackReport {
        inversion: attack_inversion(&data.aux, &data.eval, cfg)?,
        attribute: attack_attribute_inference(&data.aux, &data.eval, data.classes, cfg)?,
        membership: attack_membership(&data.aux, &data.eval, cfg)?,
    })
}
