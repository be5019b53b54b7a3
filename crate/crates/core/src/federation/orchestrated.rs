use crate::data::{BankId, Corpus};
use crate::error::{Error, Result};

use super::messages::{GradientMessage, PartyId, ProfileRequest, Role, Trace};
use super::parties::{Bank, Orchestrator, StepContext};
use super::{map_ordered, Router, StepOutcome, StepSettings};

/// Orchestrated split training: banks own encoders, the orchestrator owns
/// the scorer.
#[derive(Debug)]
pub struct Orchestrated {
    pub banks: Vec<Bank>,
    pub orchestrator: Orchestrator,
    pub router: Router,
}

struct Routed {
    sample: u64,
    tx: usize,
    ordering_bank: BankId,
    beneficiary_bank: BankId,
    requests: [ProfileRequest; 2],
}

/// Shrinks a released profile toward zero by the mechanism's public factor.
/// A pure function of the release, so the privacy guarantee is unchanged.
pub(crate) fn scaled(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

fn route_samples(router: &Router, corpus: &Corpus, batch: &[usize]) -> Result<Vec<Routed>> {
    batch
        .iter()
        .map(|&i| {
            let tx = &corpus.transactions()[i];
            let (eta, rho) = router.route(tx)?;
            let req = |role, account| ProfileRequest {
                sample: i as u64,
                role,
                account,
                timestamp: tx.timestamp,
            };
            Ok(Routed {
                sample: i as u64,
                tx: i,
                ordering_bank: eta,
                beneficiary_bank: rho,
                requests: [req(Role::Ordering, tx.ordering_account), req(Role::Beneficiary, tx.beneficiary_account)],
            })
        })
        .collect()
}

impl Orchestrated {
    pub fn new(banks: Vec<Bank>, orchestrator: Orchestrator, router: Router) -> Result<Self> {
        for (k, b) in banks.iter().enumerate() {
            if b.id as usize != k {
                return Err(Error::Config(format!("bank at position {k} has id {}", b.id)));
            }
        }
        if banks.len() < router.num_banks() {
            return Err(Error::Config(format!(
                "{} banks registered but only {} parties supplied",
                router.num_banks(),
                banks.len()
            )));
        }
        Ok(Self {
            banks,
            orchestrator,
            router,
        })
    }

    /// One synchronous step over `batch` (transaction indices), processed in
    /// micro-batches. Returns the mean training loss.
    pub fn step(&mut self, corpus: &Corpus, batch: &[usize], step: u64, settings: &StepSettings, trace: &mut Trace) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let (batch, skipped) = settings.split_offline(&self.router, corpus, batch, false)?;
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
            let routed = route_samples(&self.router, corpus, chunk)?;
            for r in &routed {
                trace.request(PartyId::Orchestrator, r.ordering_bank, &r.requests[0])?;
                trace.request(PartyId::Orchestrator, r.beneficiary_bank, &r.requests[1])?;
            }

            let banks = &self.banks;
            let released = map_ordered(routed.iter().collect(), settings.parallel, |r: &Routed| {
                let o = banks[r.ordering_bank as usize].release(corpus, &r.requests[0], &ctx, true)?;
                let b = banks[r.beneficiary_bank as usize].release(corpus, &r.requests[1], &ctx, true)?;
                Ok::<_, Error>((o, b))
            });
            let mut profiles = Vec::with_capacity(routed.len());
            for (r, rel) in routed.iter().zip(released) {
                let ((po, to), (pb, tb)) = rel?;
                trace.profile(PartyId::Orchestrator, &po)?;
                trace.profile(PartyId::Orchestrator, &pb)?;
                self.banks[r.ordering_bank as usize].retain(r.sample, Role::Ordering, to.expect("recorded"));
                self.banks[r.beneficiary_bank as usize].retain(r.sample, Role::Beneficiary, tb.expect("recorded"));
                let co = self.banks[r.ordering_bank as usize].mechanism().shrinkage();
                let cb = self.banks[r.beneficiary_bank as usize].mechanism().shrinkage();
                profiles.push((scaled(&po.vector, co), scaled(&pb.vector, cb), co, cb));
            }

            let orch = &self.orchestrator;
            let scored = map_ordered(routed.iter().zip(&profiles).collect(), settings.parallel, |(r, (zo, zb, _, _))| {
                let tx = &corpus.transactions()[r.tx];
                orch.score_sample(r.sample, &ctx, zo, zb, &corpus.transaction_features(r.tx), tx.label)
            });

            let mut jobs = Vec::with_capacity(2 * routed.len());
            for ((r, s), &(_, _, co, cb)) in routed.iter().zip(scored).zip(&profiles) {
                let mut s = s?;
                s.d_ordering.iter_mut().for_each(|v| *v *= co);
                s.d_beneficiary.iter_mut().for_each(|v| *v *= cb);
                loss += s.loss;
                self.orchestrator.absorb(&s.grad);
                let msgs = GradientMessage::for_sample(
                    r.sample,
                    self.banks.len(),
                    r.ordering_bank,
                    r.beneficiary_bank,
                    &s.d_ordering,
                    &s.d_beneficiary,
                );
                for m in msgs.into_iter().filter(|m| !m.is_zero()) {
                    trace.gradient(&m)?;
                    jobs.extend(self.accept_gradient(m)?);
                }
            }

            let banks = &self.banks;
            let grads = map_ordered(jobs, settings.parallel, |(b, tape, dz)| {
                banks[b as usize].contribution(tape, &dz).map(|g| (b, g))
            });
            for g in grads {
                let (b, g) = g?;
                self.banks[b as usize].absorb(&g);
            }
        }
        self.orchestrator.finish_step(batch.len(), settings.lr)?;
        for bank in &mut self.banks {
            bank.finish_step(settings.lr, settings.gamma)?;
        }
        Ok(StepOutcome {
            loss: loss / batch.len() as f64,
            used: batch.len(),
            skipped,
        })
    }

    /// Pairs each role component of a gradient message with the tape the
    /// receiving bank kept for it.
    fn accept_gradient(&mut self, msg: GradientMessage) -> Result<Vec<(BankId, crate::encoder::EncoderTape, Vec<f64>)>> {
        let bank = self
            .banks
            .get_mut(msg.bank as usize)
            .ok_or_else(|| Error::Protocol(format!("gradient addressed to unknown bank {}", msg.bank)))?;
        let mut out = Vec::new();
        for (role, part) in [(Role::Ordering, msg.ordering), (Role::Beneficiary, msg.beneficiary)] {
            if let Some(dz) = part {
                out.push((msg.bank, bank.take_tape(msg.sample, role)?, dz));
            }
        }
        Ok(out)
    }

    /// Evaluation-mode scores for `indices`; profiles are still released
    /// through each bank's mechanism.
    pub fn score(&self, corpus: &Corpus, indices: &[usize], tag: u64, settings: &StepSettings, trace: &mut Trace) -> Result<Vec<f64>> {
        let ctx = StepContext {
            seed: settings.seed,
            step: tag,
            dropout: false,
        };
        let routed = route_samples(&self.router, corpus, indices)?;
        let banks = &self.banks;
        let orch = &self.orchestrator;
        let out = map_ordered(routed.iter().collect(), settings.parallel, |r: &Routed| {
            let (po, _) = banks[r.ordering_bank as usize].release(corpus, &r.requests[0], &ctx, false)?;
            let (pb, _) = banks[r.beneficiary_bank as usize].release(corpus, &r.requests[1], &ctx, false)?;
            let zo = scaled(&po.vector, banks[r.ordering_bank as usize].mechanism().shrinkage());
            let zb = scaled(&pb.vector, banks[r.beneficiary_bank as usize].mechanism().shrinkage());
            let p = orch.scorer.score(&zo, &zb, &corpus.transaction_features(r.tx))?;
            Ok::<_, Error>((po, pb, p))
        });
        let mut scores = Vec::with_capacity(out.len());
        for (r, o) in routed.iter().zip(out) {
            let (po, pb, p) = o?;
            trace.request(PartyId::Orchestrator, r.ordering_bank, &r.requests[0])?;
            trace.profile(PartyId::Orchestrator, &po)?;
            trace.request(PartyId::Orchestrator, r.beneficiary_bank, &r.requests[1])?;
            trace.profile(PartyId::Orchestrator, &pb)?;
            scores.push(p);
        }
        Ok(scores)
    }
}
