use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::AttackSample;
use crate::data::{Account, Corpus};
use crate::error::{Error, Result};
use crate::rng::{stream, tags};

/// Account attribute targeted by attribute inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Region,
    Flag,
    HomeCurrency,
}

impl AttributeKind {
    pub fn value(self, account: &Account) -> usize {
        match self {
            AttributeKind::Region => account.region_token as usize,
            AttributeKind::Flag => account.flag.index(),
            AttributeKind::HomeCurrency => account.home_currency as usize,
        }
    }

    pub fn classes(self, corpus: &Corpus) -> usize {
        corpus.dataset.accounts.iter().map(|a| self.value(a) + 1).max().unwrap_or(0)
    }
}

impl std::str::FromStr for AttributeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "region" => Ok(AttributeKind::Region),
            "flag" => Ok(AttributeKind::Flag),
            "home_currency" => Ok(AttributeKind::HomeCurrency),
            other => Err(Error::Config(format!("unknown attribute `{other}`"))),
        }
    }
}

/// Draws `per_side` transactions from each split: `(index, member)` pairs
/// with members from the training split.
pub fn sample_population(corpus: &Corpus, per_side: usize, seed: u64) -> Result<Vec<(usize, bool)>> {
    let mut rng = stream(seed, &[tags::ATTACK, 0xB0]);
    let mut out = Vec::with_capacity(2 * per_side);
    for (range, member) in [(corpus.train_range(), true), (corpus.validation_range(), false)] {
        if range.len() < per_side {
            return Err(Error::Config(format!("split has {} transactions, {per_side} requested", range.len())));
        }
        let mut picked: Vec<usize> = index::sample(&mut rng, range.len(), per_side).into_iter().map(|j| range.start + j).collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| (i, member)));
    }
    Ok(out)
}

/// Pairs each picked transaction's ordering-account profile with the ground
/// truth: final-event numeric features, the attribute, membership and up to
/// `max_context` of the account's latest originated transactions.
pub fn assemble(
    corpus: &Corpus,
    picks: &[(usize, bool)],
    profiles: Vec<Vec<f64>>,
    attribute: AttributeKind,
    max_context: usize,
) -> Result<Vec<AttackSample>> {
    if picks.len() != profiles.len() {
        return Err(Error::dim("assemble", picks.len(), profiles.len()));
    }
    let txs = corpus.transactions();
    picks
        .iter()
        .zip(profiles)
        .map(|(&(i, member), profile)| {
            let tx = &txs[i];
            let account = corpus.account(tx.ordering_account)?;
            let targets = corpus
                .last_event_numeric(account.id, tx.timestamp)
                .ok_or_else(|| Error::Usage(format!("transaction {} missing from its own history", tx.id)))?;
            let stream_ = corpus.index.stream(account.id);
            let range = corpus.index.history_range(txs, account.id, tx.timestamp);
            let mut context = Vec::new();
            let mut labels = Vec::new();
            for &j in stream_[range].iter().rev() {
                let j = j as usize;
                if txs[j].ordering_account == account.id {
                    context.push(corpus.transaction_features(j));
                    labels.push(txs[j].label);
                    if context.len() == max_context {
                        break;
                    }
                }
            }
            Ok(AttackSample {
                account: account.id,
                timestamp: tx.timestamp,
                profile,
                targets: targets.to_vec(),
                attribute: attribute.value(account),
                member,
                context,
                context_labels: labels,
            })
        })
        .collect()
}
