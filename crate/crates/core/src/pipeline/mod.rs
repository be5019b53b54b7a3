//! Experiment pipeline: stage functions behind the command-line tool, the
//! ε sweep, the isolation audit and report writers. Every stage reads its
//! inputs from a run directory and writes fingerprinted outputs back.

pub mod audit;
pub mod config;
mod report;
mod sweep;

use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

pub use audit::{audit, AuditReport, BudgetRow, Violation};
pub use config::ExperimentConfig;
pub use report::{aggregate_rows, render_table, write_plot_data, AggregateRow, MetricSummary, MetricsRow, Summary, AGGREGATED};
pub use sweep::{cell_id, cmd_sweep, SweepOutcome};

use crate::attacks::{assemble, run_attacks, sample_population, AttackDataset, AttackReport};
use crate::data::{generate, io, Corpus};
use crate::encoder::{pretrain_bank, Encoder, PretrainReport};
use crate::error::{Error, Result};
use crate::federation::{train, Protocol, Trace, TrainReport, Trained};
use crate::kernel::{ParamBundle, Parameterized};
use crate::rng::{stream, tags};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "LDPFRAUD_OUT";

/// Step tag for releasing the attack population.
const RELEASE_TAG: u64 = 1 << 56;

/// Where a stage reads shared inputs (`root`) and writes per-run outputs (`cell`).
#[derive(Debug, Clone)]
pub struct RunContext {
    pub root: PathBuf,
    pub cell: PathBuf,
    pub parallel: bool,
    pub quiet: bool,
}

impl RunContext {
    pub fn single(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            cell: root.clone(),
            root,
            parallel: false,
            quiet: true,
        }
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn pretrain_dir(&self) -> PathBuf {
        self.root.join("pretrain")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.cell.join("train")
    }

    pub fn attack_dir(&self) -> PathBuf {
        self.cell.join("attack")
    }
}

fn missing(path: &Path, producer: &'static str) -> Error {
    Error::MissingArtifact {
        path: path.display().to_string(),
        producer,
    }
}

fn read_required(path: &Path, producer: &'static str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|_| missing(path, producer))
}

/// Writes via a temporary file and rename so readers never see a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub(crate) fn append_line(path: &Path, line: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Format(e.to_string()))
}

fn from_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    stage: &'a str,
    fingerprint: &'a str,
    outputs: Vec<String>,
}

fn log_stage(ctx: &RunContext, stage: &str, fingerprint: &str, outputs: &[PathBuf]) -> Result<()> {
    let entry = ManifestEntry {
        stage,
        fingerprint,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    append_line(&ctx.cell.join("manifest.ndjson"), &to_json(&entry)?)
}

#[derive(Serialize)]
struct Timing<'a> {
    cell: &'a str,
    stage: &'a str,
    seconds: f64,
}

fn log_timing(ctx: &RunContext, stage: &str, started: Instant) -> Result<()> {
    let cell = match ctx.cell.strip_prefix(&ctx.root) {
        Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
        _ => "-".to_string(),
    };
    let t = Timing {
        cell: &cell,
        stage,
        seconds: started.elapsed().as_secs_f64(),
    };
    append_line(&ctx.root.join("timings.ndjson"), &to_json(&t)?)
}

/// Saves the canonical config next to the run outputs.
pub fn persist_config(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("config.conf");
    let text = format!("# fingerprint {}\n{}", cfg.fingerprint(), cfg.render());
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

pub fn cmd_generate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<()> {
    let started = Instant::now();
    let dataset = generate(&cfg.data)?;
    io::write_dataset(&ctx.data_dir(), &dataset)?;
    let conf = persist_config(cfg, &ctx.root)?;
    ctx.note(format!(
        "generated {} transactions ({} fraud) over {} accounts",
        dataset.transactions.len(),
        dataset.fraud_count(),
        dataset.accounts.len()
    ));
    let outputs = [ctx.data_dir().join("transactions.csv"), ctx.data_dir().join("accounts.csv"), conf];
    log_stage(ctx, "generate", &cfg.fingerprint(), &outputs)?;
    log_timing(ctx, "generate", started)
}

pub fn load_corpus(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Corpus> {
    let dataset = io::read_dataset(&ctx.data_dir())?;
    Corpus::new(dataset, cfg.train_fraction, cfg.history_length, cfg.data.regions as usize)
}

fn encoder_path(dir: &Path, kind: &str, bank: usize) -> PathBuf {
    dir.join(format!("{kind}_bank{bank}.ckpt"))
}

fn save_bundle(path: &Path, bundle: ParamBundle, fingerprint: &str) -> Result<PathBuf> {
    write_atomic(path, &bundle.with_tag("fingerprint", fingerprint).to_bytes())?;
    Ok(path.to_path_buf())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub fingerprint: String,
    pub banks: Vec<PretrainReport>,
    pub retrieval: Vec<(f64, usize)>,
}

pub fn cmd_pretrain(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<PretrainSummary> {
    let corpus = load_corpus(cfg, ctx)?;
    pretrain_all(cfg, &corpus, ctx)
}

pub fn pretrain_all(cfg: &ExperimentConfig, corpus: &Corpus, ctx: &RunContext) -> Result<PretrainSummary> {
    let started = Instant::now();
    let fp = cfg.fingerprint();
    let dir = ctx.pretrain_dir();
    let mut outputs = Vec::new();
    let mut summary = PretrainSummary {
        fingerprint: fp.clone(),
        banks: Vec::new(),
        retrieval: Vec::new(),
    };
    for bank in 0..corpus.num_banks() {
        let (pair, report) = pretrain_bank(corpus, bank as u32, &cfg.encoder, &cfg.pretrain)?;
        let retrieval = crate::encoder::retrieval_accuracy(corpus, bank as u32, &pair, cfg.pretrain.k, cfg.pretrain.seed)?;
        ctx.note(format!("pretrained bank {bank}: final loss {:.4}, retrieval {:.3}", report.epoch_losses.last().copied().unwrap_or(f64::NAN), retrieval.0));
        outputs.push(save_bundle(&encoder_path(&dir, "psi", bank), pair.psi.to_tagged_bundle(bank as u32), &fp)?);
        outputs.push(save_bundle(&encoder_path(&dir, "phi", bank), pair.phi.to_tagged_bundle(bank as u32), &fp)?);
        summary.banks.push(report);
        summary.retrieval.push(retrieval);
    }
    let report_path = dir.join("report.json");
    write_atomic(&report_path, to_json(&summary)?.as_bytes())?;
    outputs.push(report_path);
    log_stage(ctx, "pretrain", &fp, &outputs)?;
    log_timing(ctx, "pretrain", started)?;
    Ok(summary)
}

fn load_encoder(cfg: &ExperimentConfig, corpus: &Corpus, path: &Path, producer: &'static str) -> Result<Encoder> {
    let bytes = read_required(path, producer)?;
    let mut enc = Encoder::new(&cfg.encoder, corpus.event_width(), &mut stream(0, &[]));
    enc.load_bundle(&ParamBundle::from_bytes(&bytes)?)?;
    Ok(enc)
}

/// Pretrained forward encoders, one per bank.
pub fn load_pretrained(cfg: &ExperimentConfig, corpus: &Corpus, ctx: &RunContext) -> Result<Vec<Encoder>> {
    (0..corpus.num_banks())
        .map(|b| load_encoder(cfg, corpus, &encoder_path(&ctx.pretrain_dir(), "psi", b), "pretrain"))
        .collect()
}

fn initial_encoders(cfg: &ExperimentConfig, corpus: &Corpus, ctx: &RunContext, seed: u64) -> Result<Vec<Encoder>> {
    if cfg.train.protocol == Protocol::P2p || cfg.warm_start {
        return load_pretrained(cfg, corpus, ctx);
    }
    Ok((0..corpus.num_banks())
        .map(|b| Encoder::new(&cfg.encoder, corpus.event_width(), &mut stream(seed, &[tags::INIT, b as u64])))
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainArtifact {
    pub fingerprint: String,
    pub protocol: Protocol,
    pub epsilon: String,
    pub seed: u64,
    pub report: TrainReport,
    pub messages: u64,
}

fn open_trace(cfg: &ExperimentConfig, dir: &Path) -> Result<Trace> {
    if !cfg.trace {
        return Ok(Trace::disabled());
    }
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join("trace.ndjson.gz"))?;
    Ok(Trace::to_writer(Box::new(GzEncoder::new(BufWriter::new(file), Compression::fast()))))
}

pub fn cmd_train(cfg: &ExperimentConfig, ctx: &RunContext, epsilon: f64, seed: u64) -> Result<TrainArtifact> {
    let corpus = load_corpus(cfg, ctx)?;
    train_cell(cfg, &corpus, ctx, epsilon, seed)
}

/// Trains one (ε, seed) cell, saves one checkpoint per party, the trace and
/// the released attack population.
pub fn train_cell(cfg: &ExperimentConfig, corpus: &Corpus, ctx: &RunContext, epsilon: f64, seed: u64) -> Result<TrainArtifact> {
    let started = Instant::now();
    let fp = cfg.fingerprint();
    let dir = ctx.train_dir();
    let mut tc = cfg.cell(epsilon, seed);
    tc.parallel = ctx.parallel;
    let encoders = initial_encoders(cfg, corpus, ctx, seed)?;
    let mut trace = open_trace(cfg, &dir)?;
    let (model, report) = train(corpus, encoders, &tc, &mut trace)?;
    ctx.note(format!(
        "trained {:?} at epsilon {}: validation AUC-PR {:?}",
        tc.protocol,
        config::fmt_f64(epsilon),
        report.validation.as_ref().map(|v| v.auc_pr)
    ));

    let mut outputs = Vec::new();
    for bank in model.banks() {
        let path = dir.join(format!("bank{}.ckpt", bank.id));
        outputs.push(save_bundle(&path, bank.encoder.to_tagged_bundle(bank.id), &fp)?);
    }
    outputs.push(save_bundle(&dir.join("scorer.ckpt"), model.scorer().to_bundle(), &fp)?);
    if let Trained::P2p(p) = &model {
        for b in 0..p.banks.len() as u32 {
            if let Some(pre) = p.preprocessor(b) {
                let path = dir.join(format!("pre_bank{b}.ckpt"));
                outputs.push(save_bundle(&path, pre.to_bundle().with_tag("bank", b), &fp)?);
            }
        }
    }

    if cfg.attacks {
        let picks = sample_population(corpus, cfg.population, seed)?;
        let idx: Vec<usize> = picks.iter().map(|p| p.0).collect();
        let profiles = model.release_profiles(corpus, &idx, RELEASE_TAG, &tc.step_settings(), &mut trace)?;
        let path = dir.join("profiles.csv");
        write_atomic(&path, profiles_to_string(&fp, &picks, &profiles).as_bytes())?;
        outputs.push(path);
    }
    trace.flush()?;
    let messages = trace.len();
    drop(trace);

    let artifact = TrainArtifact {
        fingerprint: fp.clone(),
        protocol: tc.protocol,
        epsilon: config::fmt_f64(epsilon),
        seed,
        report,
        messages,
    };
    let path = dir.join("report.json");
    write_atomic(&path, to_json(&artifact)?.as_bytes())?;
    outputs.push(path);
    log_stage(ctx, "train", &fp, &outputs)?;
    log_timing(ctx, "train", started)?;
    Ok(artifact)
}

fn profiles_to_string(fp: &str, picks: &[(usize, bool)], profiles: &[Vec<f64>]) -> String {
    let mut s = format!("# fingerprint {fp}\ntx_index,member,profile\n");
    for ((i, member), v) in picks.iter().zip(profiles) {
        let vals: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&format!("{i},{},{}\n", *member as u8, vals.join(" ")));
    }
    s
}

fn parse_profiles(text: &str) -> Result<(Vec<(usize, bool)>, Vec<Vec<f64>>)> {
    let mut picks = Vec::new();
    let mut profiles = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("tx_index") || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("profiles line {}: `{line}`", n + 1));
        let mut parts = line.splitn(3, ',');
        let i: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let member = match parts.next() {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(bad()),
        };
        let v: Vec<f64> = parts
            .next()
            .ok_or_else(bad)?
            .split(' ')
            .map(|x| x.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        picks.push((i, member));
        profiles.push(v);
    }
    Ok((picks, profiles))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackArtifact {
    pub fingerprint: String,
    pub seed: u64,
    pub aux: usize,
    pub eval: usize,
    pub report: AttackReport,
    pub eval_access: Vec<String>,
}

pub fn cmd_attack(cfg: &ExperimentConfig, ctx: &RunContext, seed: u64) -> Result<AttackArtifact> {
    let path = ctx.train_dir().join("profiles.csv");
    if !path.exists() {
        return Err(missing(&path, "train"));
    }
    let corpus = load_corpus(cfg, ctx)?;
    attack_cell(cfg, &corpus, ctx, seed)
}

pub fn attack_cell(cfg: &ExperimentConfig, corpus: &Corpus, ctx: &RunContext, seed: u64) -> Result<AttackArtifact> {
    let started = Instant::now();
    let fp = cfg.fingerprint();
    let path = ctx.train_dir().join("profiles.csv");
    let text = String::from_utf8(read_required(&path, "train")?).map_err(|e| Error::Format(e.to_string()))?;
    let (picks, profiles) = parse_profiles(&text)?;
    let samples = assemble(corpus, &picks, profiles, cfg.attribute, cfg.context)?;
    let data = AttackDataset::partition(samples, cfg.attribute.classes(corpus), seed)?;
    let acfg = crate::attacks::AttackConfig {
        seed,
        ..cfg.attack.clone()
    };
    let report = run_attacks(&data, &acfg)?;
    let artifact = AttackArtifact {
        fingerprint: fp.clone(),
        seed,
        aux: data.aux.len(),
        eval: data.eval.reveal("report:size").len(),
        report,
        eval_access: data.eval.access_log(),
    };
    let out = ctx.attack_dir().join("report.json");
    write_atomic(&out, to_json(&artifact)?.as_bytes())?;
    log_stage(ctx, "attack", &fp, &[out])?;
    log_timing(ctx, "attack", started)?;
    Ok(artifact)
}

/// Builds the metrics row for the run in `ctx.cell` and appends it to the
/// run's metrics file.
pub fn cmd_evaluate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<MetricsRow> {
    let row = evaluate_cell(cfg, ctx)?;
    let path = ctx.root.join("metrics.ndjson");
    append_line(&path, &to_json(&row)?)?;
    log_stage(ctx, "evaluate", &row.fingerprint, &[path])?;
    Ok(row)
}

pub fn evaluate_cell(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<MetricsRow> {
    let tpath = ctx.train_dir().join("report.json");
    let train: TrainArtifact = from_json(&read_required(&tpath, "train")?, &tpath)?;
    let attack = if cfg.attacks {
        let apath = ctx.attack_dir().join("report.json");
        let a: AttackArtifact = from_json(&read_required(&apath, "attack")?, &apath)?;
        Some(a)
    } else {
        None
    };
    Ok(MetricsRow::new(&cfg.fingerprint(), &train, attack.as_ref().map(|a| &a.report)))
}
