use crate::data::{BankId, Corpus};
use crate::error::{Error, Result};
use crate::kernel::{bce, Optimizer, OptimizerKind, Parameterized};
use crate::ldp::PrivateProfile;
use crate::rng::tags;

use super::messages::{PartyId, ProfileRequest, Role, Trace};
use super::parties::{Bank, StepContext};
use super::scorer::{PreProcessor, Scorer};
use super::{map_ordered, Router, StepOutcome, StepSettings};

#[derive(Debug)]
struct Adapter {
    pre: PreProcessor,
    optimizer: Optimizer,
    grad: PreProcessor,
    uses: usize,
}

/// Peer-to-peer transfer learning: the acting bank trains a scorer on its
/// own noise-free embeddings and on released beneficiary profiles mapped
/// through learned per-bank pre-processors. All encoders stay frozen.
#[derive(Debug)]
pub struct PeerToPeer {
    pub acting: BankId,
    pub banks: Vec<Bank>,
    pub scorer: Scorer,
    scorer_optimizer: Optimizer,
    scorer_grad: Scorer,
    adapters: Vec<Adapter>,
    pub router: Router,
}

struct Pass {
    loss: f64,
    score: f64,
    scorer_grad: Option<Scorer>,
    adapter: Option<(BankId, PreProcessor)>,
    exchange: Option<(ProfileRequest, PrivateProfile)>,
}

impl PeerToPeer {
    /// `preprocessors[β]` maps profiles released by bank β, the acting bank included.
    pub fn new(
        acting: BankId,
        banks: Vec<Bank>,
        scorer: Scorer,
        preprocessors: Vec<PreProcessor>,
        optimizer: OptimizerKind,
        router: Router,
    ) -> Result<Self> {
        if acting as usize >= banks.len() || preprocessors.len() != banks.len() {
            return Err(Error::Config(format!(
                "acting bank {acting} with {} banks and {} pre-processors",
                banks.len(),
                preprocessors.len()
            )));
        }
        let adapters = preprocessors
            .into_iter()
            .map(|pre| Adapter {
                grad: pre.zeros_like(),
                optimizer: Optimizer::new(optimizer, pre.num_params()),
                pre,
                uses: 0,
            })
            .collect();
        Ok(Self {
            acting,
            scorer_grad: scorer.zeros_like(),
            scorer_optimizer: Optimizer::new(optimizer, scorer.num_params()),
            scorer,
            adapters,
            banks,
            router,
        })
    }

    pub fn preprocessor(&self, bank: BankId) -> Option<&PreProcessor> {
        self.adapters.get(bank as usize).map(|a| &a.pre)
    }

    /// Transactions the acting bank can train on: those it originates.
    pub fn eligible(&self, corpus: &Corpus, indices: impl IntoIterator<Item = usize>) -> Vec<usize> {
        indices
            .into_iter()
            .filter(|&i| {
                let t = &corpus.transactions()[i];
                self.router.bank_of(t.ordering_account).ok() == Some(self.acting)
            })
            .collect()
    }

    fn pass(&self, corpus: &Corpus, i: usize, ctx: &StepContext, train: bool) -> Result<Pass> {
        let tx = &corpus.transactions()[i];
        let (eta, rho) = self.router.route(tx)?;
        if eta != self.acting {
            return Err(Error::Protocol(format!(
                "bank {} cannot score transaction {} originated at bank {eta}",
                self.acting, tx.id
            )));
        }
        let own = &self.banks[self.acting as usize];
        let z_o = own.clean_embedding(corpus, tx.ordering_account, tx.timestamp)?;
        let x = corpus.transaction_features(i);
        let sample = i as u64;

        let req = ProfileRequest {
            sample,
            role: Role::Beneficiary,
            account: tx.beneficiary_account,
            timestamp: tx.timestamp,
        };
        let (profile, _) = self.banks[rho as usize].release(corpus, &req, ctx, false)?;
        let pre = &self.adapters[rho as usize].pre;
        let shrink = self.banks[rho as usize].mechanism().shrinkage();
        let (r_b, pre_tape) = pre.mlp.forward(&super::orchestrated::scaled(&profile.vector, shrink), None)?;
        // Requests to the acting bank itself never leave the party.
        let exchange = (rho != self.acting).then_some((req, profile));

        if !train {
            let score = self.scorer.score(&z_o, &r_b, &x)?;
            return Ok(Pass {
                loss: 0.0,
                score,
                scorer_grad: None,
                adapter: None,
                exchange,
            });
        }
        let mut rng = ctx.rng(tags::DROPOUT, u64::MAX, sample, Role::Ordering);
        let (p, mut tape) = self.scorer.forward(&z_o, &r_b, &x, ctx.dropout.then_some(&mut rng))?;
        let (loss, dp) = bce(p, tx.label as f64);
        let mut scorer_grad = self.scorer.zeros_like();
        let d = self.scorer.backward(&mut tape, dp, &mut scorer_grad)?;
        let mut pre_tape = pre_tape;
        let mut g = pre.zeros_like();
        pre.mlp.backward(&mut pre_tape, &d.z_b, &mut g.mlp)?;
        Ok(Pass {
            loss,
            score: p,
            scorer_grad: Some(scorer_grad),
            adapter: Some((rho, g)),
            exchange,
        })
    }

    fn log(&self, trace: &mut Trace, exchange: &Option<(ProfileRequest, PrivateProfile)>) -> Result<()> {
        if let Some((req, profile)) = exchange {
            trace.request(PartyId::Bank(self.acting), profile.bank, req)?;
            trace.profile(PartyId::Bank(self.acting), profile)?;
        }
        Ok(())
    }

    /// One step over `batch`; every index must be a transaction originated
    /// by the acting bank. Returns the mean training loss.
    pub fn step(&mut self, corpus: &Corpus, batch: &[usize], step: u64, settings: &StepSettings, trace: &mut Trace) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let (batch, skipped) = settings.split_offline(&self.router, corpus, batch, true)?;
        if batch.is_empty() {
            return Ok(StepOutcome {
                loss: 0.0,
                used: 0,
                skipped,
            });
        }
        let ctx = StepContext {
            seed: settings.seed,
            step,
            dropout: settings.dropout,
        };
        let mut loss = 0.0;
        for chunk in batch.chunks(settings.micro_batch.max(1)) {
            let this = &*self;
            let passes = map_ordered(chunk.to_vec(), settings.parallel, |i| this.pass(corpus, i, &ctx, true));
            for p in passes {
                let p = p?;
                self.log(trace, &p.exchange)?;
                loss += p.loss;
                self.scorer_grad.accumulate(1.0, p.scorer_grad.as_ref().expect("training pass"));
                if let Some((b, g)) = p.adapter {
                    let a = &mut self.adapters[b as usize];
                    a.grad.accumulate(1.0, &g);
                    a.uses += 1;
                }
            }
        }
        self.scorer_grad.scale_all(1.0 / batch.len() as f64);
        self.scorer_optimizer.step(&mut self.scorer, &self.scorer_grad, settings.lr)?;
        self.scorer_grad.zero();
        for a in &mut self.adapters {
            if a.uses > 0 {
                a.grad.scale_all(1.0 / (a.uses as f64 + settings.gamma));
                a.optimizer.step(&mut a.pre, &a.grad, settings.lr)?;
            }
            a.grad.zero();
            a.uses = 0;
        }
        Ok(StepOutcome {
            loss: loss / batch.len() as f64,
            used: batch.len(),
            skipped,
        })
    }

    pub fn score(&self, corpus: &Corpus, indices: &[usize], tag: u64, settings: &StepSettings, trace: &mut Trace) -> Result<Vec<f64>> {
        let ctx = StepContext {
            seed: settings.seed,
            step: tag,
            dropout: false,
        };
        let passes = map_ordered(indices.to_vec(), settings.parallel, |i| self.pass(corpus, i, &ctx, false));
        let mut scores = Vec::with_capacity(passes.len());
        for p in passes {
            let p = p?;
            self.log(trace, &p.exchange)?;
            scores.push(p.score);
        }
        Ok(scores)
    }
}
