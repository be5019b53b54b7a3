//! The ε × repeat grid. Shared inputs (data, pretrained encoders) live at the
//! sweep root; each cell trains and attacks in its own directory. A manifest
//! records finished cells so an interrupted sweep resumes where it stopped.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::fmt_f64;
use super::report::{aggregate_rows, render_table, write_plot_data, AggregateRow, MetricsRow, Summary};
use super::{attack_cell, evaluate_cell, from_json, persist_config, pretrain_all, to_json, train_cell, write_atomic, ExperimentConfig, RunContext};
use crate::data::{generate, io, Corpus};
use crate::error::{Error, Result};
use crate::federation::Protocol;

pub fn cell_id(epsilon: f64, seed: u64) -> String {
    format!("eps-{}-seed-{seed}", fmt_f64(epsilon))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    fingerprint: String,
    done: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Cells already finished by an earlier invocation.
    pub resumed: usize,
    pub report: PathBuf,
}

fn load_manifest(path: &Path, fingerprint: &str) -> Result<Manifest> {
    if !path.exists() {
        return Ok(Manifest {
            fingerprint: fingerprint.to_string(),
            done: BTreeSet::new(),
        });
    }
    let m: Manifest = from_json(&fs::read(path)?, path)?;
    if m.fingerprint != fingerprint {
        return Err(Error::Config(format!(
            "{} belongs to a sweep with fingerprint {}, not {fingerprint}; use a fresh output directory",
            path.display(),
            m.fingerprint
        )));
    }
    Ok(m)
}

fn run_cell(cfg: &ExperimentConfig, corpus: &Corpus, root: &Path, epsilon: f64, seed: u64, quiet: bool) -> Result<MetricsRow> {
    let ctx = RunContext {
        root: root.to_path_buf(),
        cell: root.join("cells").join(cell_id(epsilon, seed)),
        parallel: false,
        quiet,
    };
    ctx.note(format!("cell {}", cell_id(epsilon, seed)));
    train_cell(cfg, corpus, &ctx, epsilon, seed)?;
    if cfg.attacks {
        attack_cell(cfg, corpus, &ctx, seed)?;
    }
    let row = evaluate_cell(cfg, &ctx)?;
    write_atomic(&ctx.cell.join("row.json"), to_json(&row)?.as_bytes())?;
    Ok(row)
}

fn run_all<F>(jobs: &[(f64, u64)], threads: usize, f: F) -> Result<()>
where
    F: Fn(f64, u64) -> Result<()> + Sync,
{
    #[cfg(feature = "parallel")]
    if threads > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        return pool.install(|| jobs.par_iter().try_for_each(|&(e, s)| f(e, s)));
    }
    let _ = threads;
    jobs.iter().try_for_each(|&(e, s)| f(e, s))
}

/// Runs every (ε, repeat) cell not yet recorded in the manifest, then
/// rewrites the sweep-level reports from all finished cells.
pub fn cmd_sweep(cfg: &ExperimentConfig, root: &Path, threads: usize, quiet: bool) -> Result<SweepOutcome> {
    cfg.validate()?;
    let fp = cfg.fingerprint();
    fs::create_dir_all(root)?;
    let manifest_path = root.join("sweep_manifest.json");
    let manifest = load_manifest(&manifest_path, &fp)?;
    let ctx = RunContext {
        root: root.to_path_buf(),
        cell: root.to_path_buf(),
        parallel: threads > 1,
        quiet,
    };
    persist_config(cfg, root)?;
    write_atomic(&manifest_path, to_json(&manifest)?.as_bytes())?;

    let data = ctx.data_dir();
    if !data.join("transactions.csv").exists() {
        io::write_dataset(&data, &generate(&cfg.data)?)?;
    }
    let corpus = Corpus::new(io::read_dataset(&data)?, cfg.train_fraction, cfg.history_length, cfg.data.regions as usize)?;
    let needs_pretrain = cfg.train.protocol == Protocol::P2p || cfg.warm_start;
    if needs_pretrain && !ctx.pretrain_dir().join("report.json").exists() {
        pretrain_all(cfg, &corpus, &ctx)?;
    }

    let grid: Vec<(f64, u64)> = cfg
        .epsilons
        .iter()
        .flat_map(|&e| (0..cfg.repeats as u64).map(move |r| (e, cfg.seed + r)))
        .collect();
    let pending: Vec<(f64, u64)> = grid
        .iter()
        .copied()
        .filter(|&(e, s)| !manifest.done.contains(&cell_id(e, s)))
        .collect();
    let resumed = grid.len() - pending.len();
    let manifest = Mutex::new(manifest);
    // A failing cell leaves a failure row and stays out of the manifest, so
    // the rest of the grid still runs and a later invocation retries it.
    run_all(&pending, threads, |e, s| match run_cell(cfg, &corpus, root, e, s, quiet) {
        Ok(_) => {
            let mut m = manifest.lock().expect("manifest lock");
            m.done.insert(cell_id(e, s));
            write_atomic(&manifest_path, to_json(&*m)?.as_bytes())
        }
        Err(err) => {
            ctx.note(format!("cell {} failed: {err}", cell_id(e, s)));
            let row = MetricsRow::failed(&fp, cfg.train.protocol, e, s, &err.to_string());
            let path = root.join("cells").join(cell_id(e, s)).join("row.json");
            write_atomic(&path, to_json(&row)?.as_bytes())
        }
    })?;

    let mut rows = Vec::with_capacity(grid.len());
    for &(e, s) in &grid {
        let path = root.join("cells").join(cell_id(e, s)).join("row.json");
        rows.push(from_json::<MetricsRow>(&fs::read(&path)?, &path)?);
    }
    let aggregates = aggregate_rows(&rows);

    let mut metrics = String::new();
    let mut report = String::new();
    for r in &rows {
        metrics.push_str(&to_json(r)?);
        metrics.push('\n');
        report.push_str(&to_json(&Summary::Cell(r.clone()))?);
        report.push('\n');
    }
    for a in &aggregates {
        report.push_str(&to_json(&Summary::Aggregate(a.clone()))?);
        report.push('\n');
    }
    write_atomic(&root.join("metrics.ndjson"), metrics.as_bytes())?;
    let report_path = root.join("report.ndjson");
    write_atomic(&report_path, report.as_bytes())?;
    write_atomic(&root.join("table.txt"), render_table(&fp, &aggregates).as_bytes())?;
    write_plot_data(root, &fp, &aggregates)?;
    ctx.note(format!("sweep finished: {} cells ({} resumed)", grid.len(), resumed));
    Ok(SweepOutcome {
        rows,
        aggregates,
        resumed,
        report: report_path,
    })
}
