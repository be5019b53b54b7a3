use std::collections::HashMap;

use crate::data::{AccountId, BankId, Corpus};
use crate::encoder::{Encoder, EncoderTape};
use crate::error::{Error, Result};
use crate::kernel::{Optimizer, OptimizerKind, Parameterized};
use crate::ldp::{Mechanism, MechanismConfig, PrivateProfile};
use crate::rng::{stream, tags, Rng};

use super::messages::{ProfileRequest, Role};
use super::scorer::{bce_loss, Scorer};

/// Per-step context that keys every random draw to `(step, sample, role)`
/// so results do not depend on the order samples are processed in.
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub seed: u64,
    pub step: u64,
    /// Dropout active (training passes only).
    pub dropout: bool,
}

impl StepContext {
    pub(crate) fn rng(&self, tag: u64, party: u64, sample: u64, role: Role) -> Rng {
        stream(self.seed, &[tag, party, self.step, sample, role as u64])
    }
}

/// A bank: owns its accounts' histories, its encoder and its release mechanism.
#[derive(Debug)]
pub struct Bank {
    pub id: BankId,
    pub encoder: Encoder,
    mechanism: Mechanism,
    optimizer: Optimizer,
    grad: Encoder,
    pending: HashMap<(u64, Role), EncoderTape>,
    roles: usize,
    frozen: Option<HashMap<(AccountId, i64), Vec<f64>>>,
}

impl Bank {
    pub fn new(id: BankId, encoder: Encoder, mechanism: MechanismConfig, optimizer: OptimizerKind, salt: u64) -> Result<Self> {
        if mechanism.dim != encoder.dim() {
            return Err(Error::dim("Bank::new", encoder.dim(), mechanism.dim));
        }
        let mechanism = Mechanism::new(mechanism, id, salt, stream(salt, &[tags::NOISE, id as u64]))?;
        Ok(Self {
            id,
            grad: encoder.zeros_like(),
            optimizer: Optimizer::new(optimizer, encoder.num_params()),
            encoder,
            mechanism,
            pending: HashMap::new(),
            roles: 0,
            frozen: None,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.mechanism.epsilon()
    }

    pub fn mechanism(&self) -> &MechanismConfig {
        &self.mechanism.config
    }

    fn own_account(&self, corpus: &Corpus, account: AccountId) -> Result<()> {
        let a = corpus.account(account)?;
        if a.bank != self.id {
            return Err(Error::Protocol(format!(
                "bank {} asked for account {account} held by bank {}",
                self.id, a.bank
            )));
        }
        Ok(())
    }

    /// Noise-free `ψ(X_{≤t})` in evaluation mode, served from the frozen
    /// cache when one has been built.
    pub fn clean_embedding(&self, corpus: &Corpus, account: AccountId, t: i64) -> Result<Vec<f64>> {
        self.own_account(corpus, account)?;
        if let Some(z) = self.frozen.as_ref().and_then(|c| c.get(&(account, t))) {
            return Ok(z.clone());
        }
        let a = corpus.account(account)?;
        self.encoder.embed_sequence(&corpus.history_events(a, t))
    }

    /// Precomputes clean embeddings for a fixed encoder. Any later parameter
    /// update drops the cache.
    pub fn freeze(&mut self, corpus: &Corpus, keys: &[(AccountId, i64)], parallel: bool) -> Result<()> {
        let mut keys = keys.to_vec();
        keys.sort_unstable();
        keys.dedup();
        self.frozen = None;
        let values = super::map_ordered(keys.clone(), parallel, |(a, t)| self.clean_embedding(corpus, a, t));
        let mut cache = HashMap::with_capacity(keys.len());
        for (k, v) in keys.into_iter().zip(values) {
            cache.insert(k, v?);
        }
        self.frozen = Some(cache);
        Ok(())
    }

    /// Serves a profile request. With `record` the forward pass is kept for
    /// a later gradient message; the tape is returned for the caller to
    /// [`retain`](Self::retain).
    pub fn release(
        &self,
        corpus: &Corpus,
        req: &ProfileRequest,
        ctx: &StepContext,
        record: bool,
    ) -> Result<(PrivateProfile, Option<EncoderTape>)> {
        let party = self.id as u64;
        let (z, tape) = if record {
            self.own_account(corpus, req.account)?;
            let events = corpus.history_events(corpus.account(req.account)?, req.timestamp);
            let mut drop_rng = ctx.rng(tags::DROPOUT, party, req.sample, req.role);
            let (z, tape) = self.encoder.forward(&events, ctx.dropout.then_some(&mut drop_rng))?;
            (z, Some(tape))
        } else {
            (self.clean_embedding(corpus, req.account, req.timestamp)?, None)
        };
        let mut noise = ctx.rng(tags::NOISE, party, req.sample, req.role);
        let profile = self.mechanism.publish_with(&mut noise, req.account, req.timestamp, &z)?;
        Ok((profile, tape))
    }

    pub fn retain(&mut self, sample: u64, role: Role, tape: EncoderTape) {
        self.roles += 1;
        self.pending.insert((sample, role), tape);
    }

    pub fn take_tape(&mut self, sample: u64, role: Role) -> Result<EncoderTape> {
        self.pending.remove(&(sample, role)).ok_or_else(|| {
            Error::Protocol(format!("bank {} holds no forward pass for sample {sample} ({role:?})", self.id))
        })
    }

    /// One sample's parameter gradient `(∂L/∂z)·(∂z/∂ω_ψ)` in a fresh buffer.
    pub fn contribution(&self, mut tape: EncoderTape, dz: &[f64]) -> Result<Encoder> {
        let mut g = self.encoder.zeros_like();
        self.encoder.backward(&mut tape, dz, &mut g)?;
        Ok(g)
    }

    pub fn absorb(&mut self, g: &Encoder) {
        self.grad.accumulate(1.0, g);
    }

    /// Number of roles this bank has played in the current step.
    pub fn involvement(&self) -> usize {
        self.roles
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Applies the accumulated gradient scaled by `1/(N_β + γ)`. A bank that
    /// played no role is left untouched, optimizer state included.
    pub fn finish_step(&mut self, lr: f64, gamma: f64) -> Result<()> {
        if !self.pending.is_empty() {
            return Err(Error::Protocol(format!(
                "bank {} ends a step with {} unanswered forward passes",
                self.id,
                self.pending.len()
            )));
        }
        if self.roles > 0 {
            self.grad.scale_all(1.0 / (self.roles as f64 + gamma));
            self.optimizer.step(&mut self.encoder, &self.grad, lr)?;
            self.frozen = None;
        }
        self.grad.zero();
        self.roles = 0;
        Ok(())
    }
}

/// Result of scoring one sample on the orchestrator.
#[derive(Debug)]
pub struct ScoredSample {
    pub loss: f64,
    pub score: f64,
    pub grad: Scorer,
    pub d_ordering: Vec<f64>,
    pub d_beneficiary: Vec<f64>,
}

/// Central party owning the scorer.
#[derive(Debug)]
pub struct Orchestrator {
    pub scorer: Scorer,
    optimizer: Optimizer,
    grad: Scorer,
}

impl Orchestrator {
    pub fn new(scorer: Scorer, optimizer: OptimizerKind) -> Self {
        Self {
            grad: scorer.zeros_like(),
            optimizer: Optimizer::new(optimizer, scorer.num_params()),
            scorer,
        }
    }

    pub fn score_sample(
        &self,
        sample: u64,
        ctx: &StepContext,
        z_o: &[f64],
        z_b: &[f64],
        x: &[f64],
        label: u8,
    ) -> Result<ScoredSample> {
        let mut rng = ctx.rng(tags::DROPOUT, u64::MAX, sample, Role::Ordering);
        let (p, mut tape) = self.scorer.forward(z_o, z_b, x, ctx.dropout.then_some(&mut rng))?;
        let (loss, dp) = bce_loss(p, label);
        let mut grad = self.scorer.zeros_like();
        let d = self.scorer.backward(&mut tape, dp, &mut grad)?;
        Ok(ScoredSample {
            loss,
            score: p,
            grad,
            d_ordering: d.z_o,
            d_beneficiary: d.z_b,
        })
    }

    pub fn absorb(&mut self, g: &Scorer) {
        self.grad.accumulate(1.0, g);
    }

    /// Mean-gradient update over a batch of `n` samples.
    pub fn finish_step(&mut self, n: usize, lr: f64) -> Result<()> {
        if n > 0 {
            self.grad.scale_all(1.0 / n as f64);
            self.optimizer.step(&mut self.scorer, &self.grad, lr)?;
        }
        self.grad.zero();
        Ok(())
    }
}
