//! Flat `key = value` experiment configuration. Lines starting with `#` are
//! comments; unknown keys are rejected. The canonical rendering (every key,
//! fixed order) is hashed into the fingerprint that tags every artifact.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::attacks::{AttackConfig, AttributeKind};
use crate::data::GeneratorConfig;
use crate::encoder::{EncoderConfig, PretrainConfig};
use crate::error::{Error, Result};
use crate::federation::{Protocol, TrainConfig};
use crate::kernel::{CellKind, OptimizerKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: GeneratorConfig,
    pub train_fraction: f64,
    pub history_length: usize,
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    /// Start orchestrated training from the pretrained encoders.
    pub warm_start: bool,
    pub train: TrainConfig,
    pub epsilons: Vec<f64>,
    pub repeats: usize,
    /// Base seed; repeat `r` of a sweep runs with `seed + r`.
    pub seed: u64,
    pub attacks: bool,
    pub attack: AttackConfig,
    pub attribute: AttributeKind,
    /// Transactions drawn from each split for the attack population.
    pub population: usize,
    pub context: usize,
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: GeneratorConfig::default(),
            train_fraction: 0.75,
            history_length: 32,
            encoder: EncoderConfig::default(),
            pretrain: PretrainConfig::default(),
            warm_start: true,
            train: TrainConfig::default(),
            epsilons: vec![0.01, 0.5, 1.0, 2.0, 5.0, 10.0, f64::INFINITY],
            repeats: 20,
            seed: 7,
            attacks: true,
            attack: AttackConfig::default(),
            attribute: AttributeKind::Region,
            population: 5000,
            context: 4,
            trace: true,
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn fmt_list<T, F: Fn(&T) -> String>(v: &[T], f: F) -> String {
    v.iter().map(f).collect::<Vec<_>>().join(",")
}

pub fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v {
        "inf" | "∞" => Ok(f64::INFINITY),
        _ => v.parse().map_err(|_| bad(key, v)),
    }
}

fn bad(key: &str, v: &str) -> Error {
    Error::Config(format!("invalid value `{v}` for `{key}`"))
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v))
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

impl ExperimentConfig {
    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.data;
        let e = &self.encoder;
        let p = &self.pretrain;
        let t = &self.train;
        let a = &self.attack;
        vec![
            ("data.banks", d.banks.to_string()),
            ("data.accounts_per_bank", d.accounts_per_bank.to_string()),
            ("data.transactions", d.transactions.to_string()),
            ("data.fraud_rate", fmt_f64(d.fraud_rate)),
            ("data.flag_correlation", fmt_f64(d.flag_correlation)),
            ("data.horizon_days", d.horizon_days.to_string()),
            ("data.regions", d.regions.to_string()),
            ("data.merchants", d.merchants.to_string()),
            ("data.currencies", d.currencies.to_string()),
            ("data.fraud_amount_shift", fmt_f64(d.fraud_amount_shift)),
            ("data.seed", d.seed.to_string()),
            ("data.train_fraction", fmt_f64(self.train_fraction)),
            ("data.history_length", self.history_length.to_string()),
            ("encoder.cell", format!("{:?}", e.cell).to_lowercase()),
            ("encoder.hidden", e.hidden.to_string()),
            ("encoder.head", fmt_list(&e.head, |v| v.to_string())),
            ("encoder.dim", e.dim.to_string()),
            ("encoder.dropout", fmt_f64(e.dropout)),
            ("encoder.clip_radius", fmt_f64(e.clip_radius)),
            ("pretrain.k", p.k.to_string()),
            ("pretrain.tau", fmt_f64(p.tau)),
            ("pretrain.epochs", p.epochs.to_string()),
            ("pretrain.batch_size", p.batch_size.to_string()),
            ("pretrain.lr", fmt_f64(p.lr)),
            ("pretrain.include_positive", p.include_positive.to_string()),
            ("pretrain.seed", p.seed.to_string()),
            ("train.protocol", format!("{:?}", t.protocol).to_lowercase()),
            ("train.epsilon", fmt_list(&t.epsilon, |v| fmt_f64(*v))),
            ("train.sensitivity", fmt_f64(t.sensitivity)),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.micro_batch", t.micro_batch.to_string()),
            ("train.lr", fmt_f64(t.lr)),
            ("train.gamma", fmt_f64(t.gamma)),
            ("train.epochs", t.epochs.to_string()),
            ("train.optimizer", format!("{:?}", t.optimizer).to_lowercase()),
            ("train.scorer_hidden", fmt_list(&t.scorer.hidden, |v| v.to_string())),
            ("train.scorer_dropout", fmt_f64(t.scorer.dropout)),
            ("train.preprocessor_hidden", t.preprocessor_hidden.to_string()),
            ("train.acting_bank", t.acting_bank.to_string()),
            ("train.negatives_per_epoch", t.negatives_per_epoch.unwrap_or(0).to_string()),
            ("train.dropout", t.dropout.to_string()),
            ("train.validate_every_epoch", t.validate_every_epoch.to_string()),
            ("train.warm_start", self.warm_start.to_string()),
            ("sweep.epsilons", fmt_list(&self.epsilons, |v| fmt_f64(*v))),
            ("sweep.repeats", self.repeats.to_string()),
            ("seed", self.seed.to_string()),
            ("attack.enabled", self.attacks.to_string()),
            ("attack.attribute", serde_json::to_value(self.attribute).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
            ("attack.population", self.population.to_string()),
            ("attack.context", self.context.to_string()),
            ("attack.hidden", fmt_list(&a.model.hidden, |v| v.to_string())),
            ("attack.epochs", a.model.epochs.to_string()),
            ("attack.batch_size", a.model.batch_size.to_string()),
            ("attack.lr", fmt_f64(a.model.lr)),
            ("attack.shadow_hidden", fmt_list(&a.shadow.hidden, |v| v.to_string())),
            ("attack.shadow_dropout", fmt_f64(a.shadow.dropout)),
            ("attack.shadow_epochs", a.shadow.epochs.to_string()),
            ("attack.shadow_passes", a.shadow_passes.to_string()),
            ("attack.holdout", fmt_f64(a.holdout)),
            ("trace.enabled", self.trace.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let d = &mut self.data;
        let e = &mut self.encoder;
        let p = &mut self.pretrain;
        let t = &mut self.train;
        let a = &mut self.attack;
        match key {
            "data.banks" => d.banks = parse(key, v)?,
            "data.accounts_per_bank" => d.accounts_per_bank = parse(key, v)?,
            "data.transactions" => d.transactions = parse(key, v)?,
            "data.fraud_rate" => d.fraud_rate = parse_f64(key, v)?,
            "data.flag_correlation" => d.flag_correlation = parse_f64(key, v)?,
            "data.horizon_days" => d.horizon_days = parse(key, v)?,
            "data.regions" => d.regions = parse(key, v)?,
            "data.merchants" => d.merchants = parse(key, v)?,
            "data.currencies" => d.currencies = parse(key, v)?,
            "data.fraud_amount_shift" => d.fraud_amount_shift = parse_f64(key, v)?,
            "data.seed" => d.seed = parse(key, v)?,
            "data.train_fraction" => self.train_fraction = parse_f64(key, v)?,
            "data.history_length" => self.history_length = parse(key, v)?,
            "encoder.cell" => {
                e.cell = match v {
                    "simple" => CellKind::Simple,
                    "lstm" => CellKind::Lstm,
                    _ => return Err(bad(key, v)),
                }
            }
            "encoder.hidden" => e.hidden = parse(key, v)?,
            "encoder.head" => {
                let h = parse_usize_list(key, v)?;
                e.head = h.try_into().map_err(|_| bad(key, v))?;
            }
            "encoder.dim" => e.dim = parse(key, v)?,
            "encoder.dropout" => e.dropout = parse_f64(key, v)?,
            "encoder.clip_radius" => e.clip_radius = parse_f64(key, v)?,
            "pretrain.k" => p.k = parse(key, v)?,
            "pretrain.tau" => p.tau = parse_f64(key, v)?,
            "pretrain.epochs" => p.epochs = parse(key, v)?,
            "pretrain.batch_size" => p.batch_size = parse(key, v)?,
            "pretrain.lr" => p.lr = parse_f64(key, v)?,
            "pretrain.include_positive" => p.include_positive = parse(key, v)?,
            "pretrain.seed" => p.seed = parse(key, v)?,
            "train.protocol" => t.protocol = v.parse::<Protocol>()?,
            "train.epsilon" => t.epsilon = parse_f64_list(key, v)?,
            "train.sensitivity" => t.sensitivity = parse_f64(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.micro_batch" => t.micro_batch = parse(key, v)?,
            "train.lr" => t.lr = parse_f64(key, v)?,
            "train.gamma" => t.gamma = parse_f64(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.optimizer" => {
                t.optimizer = match v {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(bad(key, v)),
                }
            }
            "train.scorer_hidden" => t.scorer.hidden = parse_usize_list(key, v)?,
            "train.scorer_dropout" => t.scorer.dropout = parse_f64(key, v)?,
            "train.preprocessor_hidden" => t.preprocessor_hidden = parse(key, v)?,
            "train.acting_bank" => t.acting_bank = parse(key, v)?,
            "train.negatives_per_epoch" => {
                let n: usize = parse(key, v)?;
                t.negatives_per_epoch = (n > 0).then_some(n);
            }
            "train.dropout" => t.dropout = parse(key, v)?,
            "train.validate_every_epoch" => t.validate_every_epoch = parse(key, v)?,
            "train.warm_start" => self.warm_start = parse(key, v)?,
            "sweep.epsilons" => self.epsilons = parse_f64_list(key, v)?,
            "sweep.repeats" => self.repeats = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "attack.enabled" => self.attacks = parse(key, v)?,
            "attack.attribute" => self.attribute = v.parse()?,
            "attack.population" => self.population = parse(key, v)?,
            "attack.context" => self.context = parse(key, v)?,
            "attack.hidden" => a.model.hidden = parse_usize_list(key, v)?,
            "attack.epochs" => a.model.epochs = parse(key, v)?,
            "attack.batch_size" => a.model.batch_size = parse(key, v)?,
            "attack.lr" => a.model.lr = parse_f64(key, v)?,
            "attack.shadow_hidden" => a.shadow.hidden = parse_usize_list(key, v)?,
            "attack.shadow_dropout" => a.shadow.dropout = parse_f64(key, v)?,
            "attack.shadow_epochs" => a.shadow.epochs = parse(key, v)?,
            "attack.shadow_passes" => a.shadow_passes = parse(key, v)?,
            "attack.holdout" => a.holdout = parse_f64(key, v)?,
            "trace.enabled" => self.trace = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("invalid configuration: "))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text: every key, one per line, in fixed order.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Hex sha256 of the canonical rendering and the crate version.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(b"\n");
        h.update(self.render().as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.repeats == 0 {
            return Err(Error::Config("sweep.repeats must be at least 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("sweep.epsilons is empty".into()));
        }
        if self.history_length == 0 || self.population == 0 || self.context == 0 {
            return Err(Error::Config("history length, attack population and context must be positive".into()));
        }
        if self.encoder.clip_radius > self.train.sensitivity / 2.0 {
            return Err(Error::Config(format!(
                "encoder clip radius {} exceeds half the sensitivity {}",
                self.encoder.clip_radius, self.train.sensitivity
            )));
        }
        let mut t = self.train.clone();
        t.epsilon = self.epsilons.clone();
        t.epsilon.truncate(1);
        t.validate(self.data.banks as usize)?;
        self.train.validate(self.data.banks as usize)?;
        Ok(())
    }

    /// Training configuration for one sweep cell.
    pub fn cell(&self, epsilon: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            epsilon: vec![epsilon],
            seed,
            ..self.train.clone()
        }
    }
}
