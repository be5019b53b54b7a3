//! Offline check of persisted message traces: only the allowed message kinds
//! cross party boundaries, every released profile went through the Laplace
//! mechanism, and gradients only flow from the orchestrator to banks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::federation::{TraceRecord, ALLOWED_KINDS};
use crate::ldp::{PrivateProfile, MECHANISM_TAG};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub file: String,
    pub record: u64,
    pub reason: String,
}

/// Releases observed from one bank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub bank: u32,
    pub releases: u64,
    pub epsilons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct AuditReport {
    pub files: Vec<String>,
    pub records: u64,
    pub kinds: BTreeMap<String, u64>,
    pub budget: Vec<BudgetRow>,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = format!("scanned {} records in {} trace files\n", self.records, self.files.len());
        for (k, n) in &self.kinds {
            s.push_str(&format!("  {k:<16} {n}\n"));
        }
        s.push_str("bank  releases  epsilon\n");
        for b in &self.budget {
            s.push_str(&format!("{:<5} {:<9} {}\n", b.bank, b.releases, b.epsilons.join(",")));
        }
        if self.is_clean() {
            s.push_str("no violations\n");
        } else {
            s.push_str(&format!("{} violations\n", self.violations.len()));
            for v in &self.violations {
                s.push_str(&format!("  {}#{}: {}\n", v.file, v.record, v.reason));
            }
        }
        s
    }
}

fn is_trace(p: &Path) -> bool {
    matches!(p.file_name().and_then(|n| n.to_str()), Some("trace.ndjson" | "trace.ndjson.gz"))
}

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(&p, out)?;
        } else if is_trace(&p) {
            out.push(p);
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<Box<dyn BufRead>> {
    let f = File::open(path)?;
    let r: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(MultiGzDecoder::new(f))
    } else {
        Box::new(f)
    };
    Ok(Box::new(BufReader::new(r)))
}

fn bank_of(party: &str) -> Option<u32> {
    party.strip_prefix("bank:")?.parse().ok()
}

fn check(rec: &TraceRecord, budget: &mut BTreeMap<u32, (u64, Vec<String>)>) -> Option<String> {
    if !ALLOWED_KINDS.contains(&rec.kind.as_str()) {
        return Some(format!("message kind `{}` is not allowed to cross a party boundary", rec.kind));
    }
    match rec.kind.as_str() {
        "private_profile" => {
            let Some(sender) = bank_of(&rec.sender) else {
                return Some(format!("profile sent by non-bank party `{}`", rec.sender));
            };
            let p = match PrivateProfile::from_line(&rec.payload) {
                Ok(p) => p,
                Err(e) => return Some(format!("unparseable profile: {e}")),
            };
            if p.mechanism != MECHANISM_TAG {
                return Some(format!("profile released through `{}`", p.mechanism));
            }
            if p.bank != sender {
                return Some(format!("profile of bank {} sent by bank {sender}", p.bank));
            }
            let entry = budget.entry(sender).or_default();
            entry.0 += 1;
            let eps = crate::ldp::epsilon_label(p.epsilon);
            if !entry.1.contains(&eps) {
                entry.1.push(eps);
            }
            None
        }
        "gradient" if rec.sender != "orchestrator" || bank_of(&rec.receiver).is_none() => {
            Some(format!("gradient from `{}` to `{}`", rec.sender, rec.receiver))
        }
        _ => None,
    }
}

/// Scans `path` (a trace file or a directory searched recursively).
pub fn audit(path: &Path) -> Result<AuditReport> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.display().to_string(),
            producer: "train",
        });
    }
    let mut files = Vec::new();
    collect(path, &mut files)?;
    if files.is_empty() {
        return Err(Error::MissingArtifact {
            path: path.join("**/trace.ndjson.gz").display().to_string(),
            producer: "train",
        });
    }
    let mut report = AuditReport::default();
    let mut budget = BTreeMap::new();
    for file in &files {
        let name = file.display().to_string();
        for (n, line) in open(file)?.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            report.records += 1;
            let rec: TraceRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    report.violations.push(Violation {
                        file: name.clone(),
                        record: n as u64,
                        reason: format!("unparseable record: {e}"),
                    });
                    continue;
                }
            };
            *report.kinds.entry(rec.kind.clone()).or_default() += 1;
            if let Some(reason) = check(&rec, &mut budget) {
                report.violations.push(Violation {
                    file: name.clone(),
                    record: rec.id,
                    reason,
                });
            }
        }
        report.files.push(name);
    }
    report.budget = budget
        .into_iter()
        .map(|(bank, (releases, epsilons))| BudgetRow { bank, releases, epsilons })
        .collect();
    Ok(report)
}
