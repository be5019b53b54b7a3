//! Brute-force reference implementations of the evaluation metrics: every
//! threshold is enumerated and every pair is counted.

use ldpfraud::metrics::{
    accuracy, auc_roc, average_precision, binary_metrics, regression_metrics, tpr_at_fpr, FPR_LEVELS,
};
use ldpfraud::rng::{stream, Rng};
use rand::Rng as _;

pub fn auc_roc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut credit, mut pairs) = (0.0, 0.0);
    for i in (0..scores.len()).filter(|&i| labels[i] == 1) {
        for j in (0..scores.len()).filter(|&j| labels[j] == 0) {
            let (si, sj) = (scores[i], scores[j]);
            pairs += 1.0;
            if si > sj {
                credit += 1.0;
            } else if si == sj {
                credit += 0.5;
            }
        }
    }
    credit / pairs
}

fn thresholds(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

/// `(tp, fp)` when everything scoring at least `t` is flagged.
fn counts_at(scores: &[f64], labels: &[u8], t: f64) -> (usize, usize) {
    scores.iter().zip(labels).filter(|(s, _)| **s >= t).fold((0, 0), |(tp, fp), (_, &l)| {
        if l == 1 {
            (tp + 1, fp)
        } else {
            (tp, fp + 1)
        }
    })
}

/// `Σ (R_k − R_{k−1}) P_k` over descending thresholds.
pub fn average_precision_thresholds(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds(scores) {
        let (tp, fp) = counts_at(scores, labels, t);
        let recall = tp as f64 / pos;
        ap += (recall - prev_recall) * tp as f64 / (tp + fp) as f64;
        prev_recall = recall;
    }
    ap
}

pub fn tpr_at_fpr_thresholds(scores: &[f64], labels: &[u8], theta: f64) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    thresholds(scores)
        .into_iter()
        .map(|t| counts_at(scores, labels, t))
        .filter(|&(_, fp)| fp as f64 / neg <= theta)
        .map(|(tp, _)| tp as f64 / pos)
        .fold(0.0, f64::max)
}

pub fn r2_direct(pred: &[f64], target: &[f64]) -> f64 {
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let res: f64 = pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum();
    let tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    1.0 - res / tot
}

/// `2TP / (2TP + FP + FN)`, zero when nothing is positive on either side.
pub fn f_score_counts(pred: &[usize], labels: &[usize]) -> f64 {
    let tp = pred.iter().zip(labels).filter(|(p, l)| **p == 1 && **l == 1).count() as f64;
    let wrong = pred.iter().zip(labels).filter(|(p, l)| p != l).count() as f64;
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + wrong)
    }
}

pub fn accuracy_counts(pred: &[usize], labels: &[usize]) -> f64 {
    let mut hits = 0usize;
    for i in 0..labels.len() {
        if pred[i] == labels[i] {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

/// Random scored set of size 2..=1000 with both classes present; scores are
/// drawn from a coarse grid on some draws so that ties occur.
pub fn scored_set(rng: &mut Rng) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=1000);
    let rate = rng.random_range(0.01..0.9);
    let grid = rng.random_bool(0.5).then(|| rng.random_range(2..20));
    let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(rate) as u8).collect();
    labels[0] = 1;
    labels[1] = 0;
    let scores = labels
        .iter()
        .map(|&l| {
            let s: f64 = rng.random_range(0.0..1.0) + 0.3 * l as f64;
            match grid {
                Some(g) => (s * g as f64).floor() / g as f64,
                None => s,
            }
        })
        .collect();
    (scores, labels)
}

/// Largest disagreement between library and oracle over `sets` random
/// scored sets, per metric name.
pub fn max_deviation(sets: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = stream(seed, &[]);
    let mut worst = [("auc_roc", 0.0f64), ("auc_pr", 0.0), ("tpr_at_fpr", 0.0), ("r2", 0.0), ("f_score", 0.0), ("accuracy", 0.0)];
    let mut bump = |k: usize, a: f64, b: f64| worst[k].1 = worst[k].1.max((a - b).abs());
    for _ in 0..sets {
        let (scores, labels) = scored_set(&mut rng);
        bump(0, auc_roc(&scores, &labels).unwrap(), auc_roc_pairs(&scores, &labels));
        bump(1, average_precision(&scores, &labels).unwrap(), average_precision_thresholds(&scores, &labels));
        for theta in FPR_LEVELS.into_iter().chain([rng.random_range(0.0..1.0)]) {
            bump(2, tpr_at_fpr(&scores, &labels, theta).unwrap(), tpr_at_fpr_thresholds(&scores, &labels, theta));
        }

        let n = scores.len();
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pred: Vec<f64> = target.iter().map(|t| t + rng.random_range(-0.5..0.5)).collect();
        let rows = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
        let r2 = regression_metrics(&rows(&pred), &rows(&target)).unwrap().mean;
        bump(3, r2, r2_direct(&pred, &target));

        let truth: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let guess: Vec<usize> = scores.iter().map(|&s| (s >= 0.5) as usize).collect();
        bump(4, binary_metrics(&guess, &truth).unwrap().f_score, f_score_counts(&guess, &truth));
        let k = rng.random_range(2..6);
        let multi: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let multi_guess: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        bump(5, accuracy(&multi_guess, &multi).unwrap(), accuracy_counts(&multi_guess, &multi));
    }
    worst.to_vec()
}
