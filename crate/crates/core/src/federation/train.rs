use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{BankId, Corpus};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::kernel::OptimizerKind;
use crate::ldp::MechanismConfig;
use crate::metrics::{average_precision, curve_metrics, CurveMetrics};
use crate::rng::{derive_seed, stream, tags};

use super::messages::{PartyId, ProfileRequest, Role, Trace};
use super::orchestrated::Orchestrated;
use super::p2p::PeerToPeer;
use super::parties::{Bank, Orchestrator};
use super::scorer::{PreProcessor, Scorer, ScorerConfig};
use super::{Router, StepSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    P2p,
    Orchestrated,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p2p" => Ok(Protocol::P2p),
            "orchestrated" => Ok(Protocol::Orchestrated),
            other => Err(Error::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub protocol: Protocol,
    /// Budget per bank; a single value applies to every bank.
    pub epsilon: Vec<f64>,
    pub sensitivity: f64,
    pub batch_size: usize,
    pub micro_batch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub scorer: ScorerConfig,
    pub preprocessor_hidden: usize,
    pub acting_bank: BankId,
    /// Legitimate transactions drawn per epoch; every fraud is always kept.
    /// `None` trains on the full split.
    pub negatives_per_epoch: Option<usize>,
    pub dropout: bool,
    pub parallel: bool,
    /// Score the validation split after every epoch, not only the last.
    pub validate_every_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Orchestrated,
            epsilon: vec![f64::INFINITY],
            sensitivity: crate::ldp::DEFAULT_SENSITIVITY,
            batch_size: 1024,
            micro_batch: 8,
            lr: 0.001,
            gamma: 1e-8,
            epochs: 5,
            seed: 7,
            optimizer: OptimizerKind::Adam,
            scorer: ScorerConfig::default(),
            preprocessor_hidden: 32,
            acting_bank: 0,
            negatives_per_epoch: None,
            dropout: true,
            parallel: false,
            validate_every_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, banks: usize) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.micro_batch == 0 || self.batch_size == 0 || self.batch_size % self.micro_batch != 0 {
            return err(format!(
                "batch size {} must be a positive multiple of the micro-batch size {}",
                self.batch_size, self.micro_batch
            ));
        }
        if !(self.gamma > 0.0) {
            return err(format!("slack γ must be positive, got {}", self.gamma));
        }
        if !(self.lr > 0.0) || self.epochs == 0 {
            return err("learning rate and epoch count must be positive".into());
        }
        if self.epsilon.len() != 1 && self.epsilon.len() != banks {
            return err(format!("{} budgets given for {banks} banks", self.epsilon.len()));
        }
        if self.protocol == Protocol::P2p && self.acting_bank as usize >= banks {
            return err(format!("acting bank {} does not exist", self.acting_bank));
        }
        for &e in &self.epsilon {
            self.mechanism(e, 1)?;
        }
        Ok(())
    }

    pub fn epsilon_of(&self, bank: BankId) -> f64 {
        if self.epsilon.len() == 1 {
            self.epsilon[0]
        } else {
            self.epsilon[bank as usize]
        }
    }

    fn mechanism(&self, epsilon: f64, dim: usize) -> Result<MechanismConfig> {
        let m = MechanismConfig {
            epsilon,
            sensitivity: self.sensitivity,
            dim,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn step_settings(&self) -> StepSettings {
        StepSettings {
            seed: self.seed,
            lr: self.lr,
            gamma: self.gamma,
            micro_batch: self.micro_batch,
            dropout: self.dropout,
            parallel: self.parallel,
            offline: Vec::new(),
        }
    }
}

fn make_banks(encoders: Vec<Encoder>, cfg: &TrainConfig) -> Result<Vec<Bank>> {
    encoders
        .into_iter()
        .enumerate()
        .map(|(b, enc)| {
            let b = b as BankId;
            let mech = cfg.mechanism(cfg.epsilon_of(b), enc.dim())?;
            Bank::new(b, enc, mech, cfg.optimizer, derive_seed(cfg.seed, &[tags::NOISE, b as u64]))
        })
        .collect()
}

fn check_encoders(corpus: &Corpus, encoders: &[Encoder]) -> Result<usize> {
    if encoders.len() != corpus.num_banks() {
        return Err(Error::Config(format!(
            "{} encoders supplied for {} banks",
            encoders.len(),
            corpus.num_banks()
        )));
    }
    let dim = encoders[0].dim();
    for e in encoders {
        if e.dim() != dim || e.inputs() != corpus.event_width() {
            return Err(Error::dim("encoders", format!("{dim}/{}", corpus.event_width()), format!("{}/{}", e.dim(), e.inputs())));
        }
    }
    Ok(dim)
}

/// Banks with `encoders` (fresh or warm-started) plus a freshly initialised
/// central scorer.
pub fn build_orchestrated(corpus: &Corpus, encoders: Vec<Encoder>, cfg: &TrainConfig) -> Result<Orchestrated> {
    cfg.validate(corpus.num_banks())?;
    let dim = check_encoders(corpus, &encoders)?;
    let x_width = corpus.spec.transaction_width();
    let scorer = Scorer::new(&cfg.scorer, dim, x_width, &mut stream(cfg.seed, &[tags::INIT, 0x5C]));
    Orchestrated::new(
        make_banks(encoders, cfg)?,
        Orchestrator::new(scorer, cfg.optimizer),
        Router::new(&corpus.dataset.accounts),
    )
}

/// The acting bank's scorer and pre-processors over frozen `encoders`.
pub fn build_p2p(corpus: &Corpus, encoders: Vec<Encoder>, cfg: &TrainConfig) -> Result<PeerToPeer> {
    cfg.validate(corpus.num_banks())?;
    let dim = check_encoders(corpus, &encoders)?;
    let x_width = corpus.spec.transaction_width();
    let mut rng = stream(cfg.seed, &[tags::INIT, 0x9E]);
    let scorer = Scorer::new(&cfg.scorer, dim, x_width, &mut rng);
    let pres = (0..encoders.len()).map(|_| PreProcessor::new(dim, cfg.preprocessor_hidden, dim, &mut rng)).collect();
    PeerToPeer::new(
        cfg.acting_bank,
        make_banks(encoders, cfg)?,
        scorer,
        pres,
        cfg.optimizer,
        Router::new(&corpus.dataset.accounts),
    )
}

#[derive(Debug)]
pub enum Trained {
    Orchestrated(Orchestrated),
    P2p(PeerToPeer),
}

impl Trained {
    pub fn banks(&self) -> &[Bank] {
        match self {
            Trained::Orchestrated(o) => &o.banks,
            Trained::P2p(p) => &p.banks,
        }
    }

    pub fn scorer(&self) -> &Scorer {
        match self {
            Trained::Orchestrated(o) => &o.orchestrator.scorer,
            Trained::P2p(p) => &p.scorer,
        }
    }

    /// Transactions this model can score: all of them, or the acting bank's.
    pub fn scope(&self, corpus: &Corpus, indices: std::ops::Range<usize>) -> Vec<usize> {
        match self {
            Trained::Orchestrated(_) => indices.collect(),
            Trained::P2p(p) => p.eligible(corpus, indices),
        }
    }

    pub fn score(&self, corpus: &Corpus, indices: &[usize], tag: u64, settings: &StepSettings, trace: &mut Trace) -> Result<Vec<f64>> {
        match self {
            Trained::Orchestrated(o) => o.score(corpus, indices, tag, settings, trace),
            Trained::P2p(p) => p.score(corpus, indices, tag, settings, trace),
        }
    }

    /// Releases the ordering-account profile of each transaction through
    /// its bank's mechanism, as any outside receiver would see it.
    pub fn release_profiles(&self, corpus: &Corpus, indices: &[usize], tag: u64, settings: &StepSettings, trace: &mut Trace) -> Result<Vec<Vec<f64>>> {
        let ctx = super::StepContext {
            seed: settings.seed,
            step: tag,
            dropout: false,
        };
        let banks = self.banks();
        let router = match self {
            Trained::Orchestrated(o) => &o.router,
            Trained::P2p(p) => &p.router,
        };
        let out = super::map_ordered(indices.to_vec(), settings.parallel, |i| {
            let tx = &corpus.transactions()[i];
            let bank = router.bank_of(tx.ordering_account)?;
            let req = ProfileRequest {
                sample: i as u64,
                role: Role::Ordering,
                account: tx.ordering_account,
                timestamp: tx.timestamp,
            };
            let (p, _) = banks[bank as usize].release(corpus, &req, &ctx, false)?;
            Ok::<_, Error>((req, p))
        });
        let mut profiles = Vec::with_capacity(out.len());
        for o in out {
            let (req, p) = o?;
            trace.request(PartyId::Orchestrator, p.bank, &req)?;
            trace.profile(PartyId::Orchestrator, &p)?;
            profiles.push(p.vector);
        }
        Ok(profiles)
    }

    fn step(&mut self, corpus: &Corpus, batch: &[usize], step: u64, settings: &StepSettings, trace: &mut Trace) -> Result<super::StepOutcome> {
        match self {
            Trained::Orchestrated(o) => o.step(corpus, batch, step, settings, trace),
            Trained::P2p(p) => p.step(corpus, batch, step, settings, trace),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// `None` for epochs that were not validated or whose split lacks a class.
    pub epoch_val_auc_pr: Vec<Option<f64>>,
    pub steps: usize,
    pub samples_per_epoch: Vec<usize>,
    pub skipped: usize,
    pub validation: Option<CurveMetrics>,
    pub validation_size: usize,
}

/// Step tags at or above this value mark evaluation passes.
const EVAL_TAG: u64 = 1 << 48;

fn epoch_samples(corpus: &Corpus, pool: &[usize], cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut rng = stream(cfg.seed, &[tags::SHUFFLE, epoch as u64]);
    let txs = corpus.transactions();
    let mut samples: Vec<usize> = match cfg.negatives_per_epoch {
        None => pool.to_vec(),
        Some(k) => {
            let (pos, neg): (Vec<usize>, Vec<usize>) = pool.iter().partition(|&&i| txs[i].label == 1);
            let k = k.min(neg.len());
            let mut picked: Vec<usize> = index::sample(&mut rng, neg.len(), k).into_iter().map(|j| neg[j]).collect();
            picked.extend(pos);
            picked.sort_unstable();
            picked
        }
    };
    samples.shuffle(&mut rng);
    samples
}

/// Runs the epoch loop for `cfg.protocol`, starting from `encoders`.
pub fn train(corpus: &Corpus, encoders: Vec<Encoder>, cfg: &TrainConfig, trace: &mut Trace) -> Result<(Trained, TrainReport)> {
    let mut model = match cfg.protocol {
        Protocol::Orchestrated => Trained::Orchestrated(build_orchestrated(corpus, encoders, cfg)?),
        Protocol::P2p => Trained::P2p(build_p2p(corpus, encoders, cfg)?),
    };
    let settings = cfg.step_settings();
    let pool = model.scope(corpus, corpus.train_range());
    let val = model.scope(corpus, corpus.validation_range());
    if pool.is_empty() || val.is_empty() {
        return Err(Error::Config("training or validation split is empty for this protocol".into()));
    }
    if let Trained::P2p(p) = &mut model {
        warm_caches(p, corpus, pool.iter().chain(&val).copied(), settings.parallel)?;
    }
    let val_labels: Vec<u8> = val.iter().map(|&i| corpus.transactions()[i].label).collect();

    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        epoch_val_auc_pr: Vec::with_capacity(cfg.epochs),
        steps: 0,
        samples_per_epoch: Vec::with_capacity(cfg.epochs),
        skipped: 0,
        validation: None,
        validation_size: val.len(),
    };
    for epoch in 0..cfg.epochs {
        let samples = epoch_samples(corpus, &pool, cfg, epoch);
        let (mut loss, mut used) = (0.0, 0usize);
        for batch in samples.chunks(cfg.batch_size) {
            let out = model.step(corpus, batch, report.steps as u64, &settings, trace)?;
            loss += out.loss * out.used as f64;
            used += out.used;
            report.skipped += out.skipped;
            report.steps += 1;
        }
        report.samples_per_epoch.push(samples.len());
        report.epoch_losses.push(if used > 0 { loss / used as f64 } else { f64::NAN });

        let last = epoch + 1 == cfg.epochs;
        if cfg.validate_every_epoch || last {
            let scores = model.score(corpus, &val, EVAL_TAG + epoch as u64, &settings, trace)?;
            report.epoch_val_auc_pr.push(average_precision(&scores, &val_labels).ok());
            if last {
                report.validation = curve_metrics(&scores, &val_labels).ok();
            }
        } else {
            report.epoch_val_auc_pr.push(None);
        }
    }
    trace.flush()?;
    Ok((model, report))
}

/// Frozen encoders let every bank precompute the clean embeddings it will
/// be asked to release; noise is still drawn fresh per request.
fn warm_caches(p: &mut PeerToPeer, corpus: &Corpus, indices: impl Iterator<Item = usize>, parallel: bool) -> Result<()> {
    let mut keys: Vec<Vec<(u64, i64)>> = vec![Vec::new(); p.banks.len()];
    for i in indices {
        let t = &corpus.transactions()[i];
        let (eta, rho) = p.router.route(t)?;
        keys[eta as usize].push((t.ordering_account, t.timestamp));
        keys[rho as usize].push((t.beneficiary_account, t.timestamp));
    }
    for (bank, k) in p.banks.iter_mut().zip(keys) {
        if !k.is_empty() {
            bank.freeze(corpus, &k, parallel)?;
        }
    }
    Ok(())
}
