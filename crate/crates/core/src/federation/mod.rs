//! Distributed training over an in-process party simulation. Banks and the
//! orchestrator exchange only profile requests, released profiles and
//! per-sample gradient messages; every exchange is written to a [`Trace`].

mod messages;
mod orchestrated;
mod p2p;
mod parties;
mod scorer;
mod train;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use messages::{GradientMessage, PartyId, ProfileRequest, Role, Trace, TraceRecord, ALLOWED_KINDS};
pub use orchestrated::Orchestrated;
pub use p2p::PeerToPeer;
pub use parties::{Bank, Orchestrator, ScoredSample, StepContext};
pub use scorer::{bce_loss, InputGrads, PreProcessor, ScoreTape, Scorer, ScorerConfig};
pub use train::{build_orchestrated, build_p2p, train, Protocol, TrainConfig, TrainReport, Trained};

use crate::data::{Account, AccountId, BankId, Corpus, Transaction};
use crate::error::{Error, Result};

/// Account ownership registry.
#[derive(Debug, Clone, PartialEq)]
pub struct Router {
    owner: HashMap<AccountId, BankId>,
    banks: usize,
}

impl Router {
    pub fn new(accounts: &[Account]) -> Self {
        Self {
            owner: accounts.iter().map(|a| (a.id, a.bank)).collect(),
            banks: accounts.iter().map(|a| a.bank as usize + 1).max().unwrap_or(0),
        }
    }

    pub fn num_banks(&self) -> usize {
        self.banks
    }

    pub fn bank_of(&self, account: AccountId) -> Result<BankId> {
        self.owner.get(&account).copied().ok_or(Error::Routing(account))
    }

    /// `(η, ρ)`: the ordering and beneficiary banks of a transaction.
    pub fn route(&self, tx: &Transaction) -> Result<(BankId, BankId)> {
        Ok((self.bank_of(tx.ordering_account)?, self.bank_of(tx.beneficiary_account)?))
    }
}

/// Knobs shared by both protocols' SGD steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSettings {
    pub seed: u64,
    pub lr: f64,
    pub gamma: f64,
    pub micro_batch: usize,
    pub dropout: bool,
    pub parallel: bool,
    /// Banks simulated as unreachable; samples that need them are skipped.
    pub offline: Vec<BankId>,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self {
            seed: 7,
            lr: 0.001,
            gamma: 1e-8,
            micro_batch: 8,
            dropout: true,
            parallel: false,
            offline: Vec::new(),
        }
    }
}

impl StepSettings {
    fn split_offline(&self, router: &Router, corpus: &Corpus, batch: &[usize], beneficiary_only: bool) -> Result<(Vec<usize>, usize)> {
        if self.offline.is_empty() {
            return Ok((batch.to_vec(), 0));
        }
        let mut kept = Vec::with_capacity(batch.len());
        for &i in batch {
            let (eta, rho) = router.route(&corpus.transactions()[i])?;
            let down = self.offline.contains(&rho) || (!beneficiary_only && self.offline.contains(&eta));
            if !down {
                kept.push(i);
            }
        }
        let skipped = batch.len() - kept.len();
        Ok((kept, skipped))
    }
}

/// Outcome of one SGD step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Mean loss over the samples actually used.
    pub loss: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Maps `f` over `items`, on the rayon pool when `parallel` is set; output
/// order always matches input order.
pub(crate) fn map_ordered<T, U, F>(items: Vec<T>, parallel: bool, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = parallel;
    items.into_iter().map(f).collect()
}
