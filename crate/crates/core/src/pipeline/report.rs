//! Metrics rows, repeat aggregation, the text table and plot data files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, TrainArtifact};
use crate::attacks::{AttackReport, Candidate};
use crate::error::Result;
use crate::federation::Protocol;
use crate::metrics::aggregate_repeats;

/// One training run with its attack results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub fingerprint: String,
    pub protocol: Protocol,
    pub epsilon: String,
    pub seed: u64,
    pub status: String,
    pub auc_pr: Option<f64>,
    pub auc_roc: Option<f64>,
    pub tpr_at_1pct: Option<f64>,
    pub tpr_at_0_5pct: Option<f64>,
    pub tpr_at_0_1pct: Option<f64>,
    pub final_loss: Option<f64>,
    pub inversion_r2: Option<f64>,
    pub inversion_r2_best: Option<f64>,
    pub inversion_baseline: Option<f64>,
    pub inversion_selected: Option<Candidate>,
    pub attribute_accuracy: Option<f64>,
    pub attribute_baseline: Option<f64>,
    pub attribute_selected: Option<Candidate>,
    pub membership_f: Option<f64>,
    pub membership_baseline: Option<f64>,
    pub membership_selected: Option<Candidate>,
}

/// Metric names that are aggregated across repeats, in table order.
pub const AGGREGATED: [&str; 8] = [
    "auc_pr",
    "auc_roc",
    "tpr_at_1pct",
    "tpr_at_0_5pct",
    "tpr_at_0_1pct",
    "inversion_r2",
    "attribute_accuracy",
    "membership_f",
];

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl MetricsRow {
    pub fn new(fingerprint: &str, train: &TrainArtifact, attack: Option<&AttackReport>) -> Self {
        let v = train.report.validation.as_ref();
        let tpr = |i: usize| v.and_then(|c| c.tpr_at_fpr.get(i)).map(|p| p.1);
        Self {
            fingerprint: fingerprint.to_string(),
            protocol: train.protocol,
            epsilon: train.epsilon.clone(),
            seed: train.seed,
            status: if v.is_some() { "ok" } else { "undefined" }.into(),
            auc_pr: v.map(|c| c.auc_pr),
            auc_roc: v.map(|c| c.auc_roc),
            tpr_at_1pct: tpr(0),
            tpr_at_0_5pct: tpr(1),
            tpr_at_0_1pct: tpr(2),
            final_loss: train.report.epoch_losses.last().copied().and_then(finite),
            inversion_r2: attack.map(|a| a.inversion.report.mean),
            inversion_r2_best: attack.map(|a| a.inversion.report.best),
            inversion_baseline: attack.map(|_| 0.0),
            inversion_selected: attack.map(|a| a.inversion.selected),
            attribute_accuracy: attack.map(|a| a.attribute.metric),
            attribute_baseline: attack.map(|a| a.attribute.baseline),
            attribute_selected: attack.map(|a| a.attribute.selected),
            membership_f: attack.map(|a| a.membership.metric),
            membership_baseline: attack.map(|a| a.membership.baseline),
            membership_selected: attack.map(|a| a.membership.selected),
        }
    }

    /// Row for a cell that did not complete; every metric is undefined.
    pub fn failed(fingerprint: &str, protocol: Protocol, epsilon: f64, seed: u64, reason: &str) -> Self {
        Self {
            fingerprint: fingerprint.to_string(),
            protocol,
            epsilon: super::config::fmt_f64(epsilon),
            seed,
            status: format!("failed: {reason}"),
            auc_pr: None,
            auc_roc: None,
            tpr_at_1pct: None,
            tpr_at_0_5pct: None,
            tpr_at_0_1pct: None,
            final_loss: None,
            inversion_r2: None,
            inversion_r2_best: None,
            inversion_baseline: None,
            inversion_selected: None,
            attribute_accuracy: None,
            attribute_baseline: None,
            attribute_selected: None,
            membership_f: None,
            membership_baseline: None,
            membership_selected: None,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "auc_pr" => self.auc_pr,
            "auc_roc" => self.auc_roc,
            "tpr_at_1pct" => self.tpr_at_1pct,
            "tpr_at_0_5pct" => self.tpr_at_0_5pct,
            "tpr_at_0_1pct" => self.tpr_at_0_1pct,
            "final_loss" => self.final_loss,
            "inversion_r2" => self.inversion_r2,
            "inversion_baseline" => self.inversion_baseline,
            "attribute_accuracy" => self.attribute_accuracy,
            "attribute_baseline" => self.attribute_baseline,
            "membership_f" => self.membership_f,
            "membership_baseline" => self.membership_baseline,
            _ => None,
        }
    }
}

/// Mean and spread of one metric over the runs where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub runs: usize,
    pub mean: Option<f64>,
    /// `None` with fewer than two runs.
    pub std_error: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

/// All repeats of one (protocol, ε) cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub fingerprint: String,
    pub protocol: Protocol,
    pub epsilon: String,
    pub runs: usize,
    pub failed: usize,
    pub metrics: Vec<MetricSummary>,
}

impl AggregateRow {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.get(metric).and_then(|m| m.mean)
    }
}

/// A line of `report.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Summary {
    Cell(MetricsRow),
    Aggregate(AggregateRow),
}

fn summarize(metric: &str, values: &[f64]) -> MetricSummary {
    let (mean, std_error, ci_low, ci_high) = match values.len() {
        0 => (None, None, None, None),
        1 => (Some(values[0]), None, None, None),
        _ => {
            let s = aggregate_repeats(values).expect("two or more samples");
            (Some(s.mean), Some(s.std_error), Some(s.ci_low), Some(s.ci_high))
        }
    };
    MetricSummary {
        metric: metric.to_string(),
        runs: values.len(),
        mean,
        std_error,
        ci_low,
        ci_high,
    }
}

/// Groups rows by (protocol, ε) in first-appearance order and aggregates
/// every metric in [`AGGREGATED`]. Runs with an undefined value are left out.
pub fn aggregate_rows(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<((Protocol, String), Vec<&MetricsRow>)> = Vec::new();
    for r in rows {
        let key = (r.protocol, r.epsilon.clone());
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((protocol, epsilon), members)| AggregateRow {
            fingerprint: members[0].fingerprint.clone(),
            protocol,
            epsilon,
            runs: members.len(),
            failed: members.iter().filter(|r| r.status.starts_with("failed")).count(),
            metrics: AGGREGATED
                .iter()
                .map(|m| summarize(m, &members.iter().filter_map(|r| r.metric(m)).collect::<Vec<_>>()))
                .collect(),
        })
        .collect()
}

fn cell(m: Option<&MetricSummary>) -> String {
    match m.and_then(|m| m.mean.map(|v| (v, m.std_error))) {
        None => "n/a".into(),
        Some((v, None)) => format!("{v:.4}"),
        Some((v, Some(se))) => format!("{v:.4} ± {se:.4}"),
    }
}

/// Aligned text table: one line per (protocol, ε), one column per metric.
pub fn render_table(fingerprint: &str, aggregates: &[AggregateRow]) -> String {
    let columns = ["auc_pr", "tpr_at_1pct", "inversion_r2", "attribute_accuracy", "membership_f"];
    let mut header = vec!["protocol".to_string(), "epsilon".to_string(), "runs".to_string()];
    header.extend(columns.iter().map(|c| c.to_string()));
    let mut lines = vec![header];
    for a in aggregates {
        let mut line = vec![format!("{:?}", a.protocol).to_lowercase(), a.epsilon.clone(), a.runs.to_string()];
        line.extend(columns.iter().map(|c| cell(a.get(c))));
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = format!("# fingerprint {fingerprint}\n");
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(s, "{}", cells.join("  ").trim_end());
    }
    s
}

/// Writes `plot_<metric>.dat` files with columns `epsilon mean ci_low ci_high`.
pub fn write_plot_data(dir: &Path, fingerprint: &str, aggregates: &[AggregateRow]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for metric in AGGREGATED {
        let mut s = format!("# fingerprint {fingerprint}\n# protocol epsilon mean ci_low ci_high\n");
        for (a, m) in aggregates.iter().filter_map(|a| a.get(metric).map(|m| (a, m))) {
            let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x}"));
            let _ = writeln!(
                s,
                "{} {} {} {} {}",
                format!("{:?}", a.protocol).to_lowercase(),
                a.epsilon,
                f(m.mean),
                f(m.ci_low.or(m.mean)),
                f(m.ci_high.or(m.mean))
            );
        }
        let path = dir.join(format!("plot_{metric}.dat"));
        write_atomic(&path, s.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}
