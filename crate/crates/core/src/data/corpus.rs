use super::features::{amount_feature, gap_feature, FeatureSpec};
use super::{split_point, Account, AccountId, Dataset, HistoryIndex, Transaction};
use crate::error::{Error, Result};

/// A dataset prepared for modelling: temporal split, per-account history
/// index and train-split vocabularies.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dataset: Dataset,
    pub index: HistoryIndex,
    pub spec: FeatureSpec,
    train_len: usize,
}

impl Corpus {
    pub fn new(dataset: Dataset, train_fraction: f64, max_len: usize, regions: usize) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::Config("history length must be positive".into()));
        }
        let train_len = split_point(dataset.transactions.len(), train_fraction)?;
        let index = HistoryIndex::build(&dataset.transactions, max_len);
        let spec = FeatureSpec::from_training(&dataset.transactions[..train_len], regions);
        Ok(Self {
            dataset,
            index,
            spec,
            train_len,
        })
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.dataset.transactions
    }

    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.train_len
    }

    pub fn validation_range(&self) -> std::ops::Range<usize> {
        self.train_len..self.dataset.transactions.len()
    }

    /// Timestamp of the last training transaction.
    pub fn train_end(&self) -> i64 {
        self.dataset.transactions[self.train_len - 1].timestamp
    }

    pub fn num_banks(&self) -> usize {
        self.dataset.num_banks()
    }

    pub fn account(&self, id: AccountId) -> Result<&Account> {
        self.dataset.account(id).ok_or(Error::Routing(id))
    }

    pub fn event_width(&self) -> usize {
        self.spec.event_width()
    }

    /// Encoder input for `X_{≤t}`; a no-history event when the window is empty.
    pub fn history_events(&self, account: &Account, t: i64) -> Vec<Vec<f64>> {
        let r = self.index.history_range(self.transactions(), account.id, t);
        self.events_or_marker(account, r)
    }

    /// Encoder input for `X_{>t}` capped at `until`, oldest first.
    pub fn future_events(&self, account: &Account, t: i64, until: i64) -> Vec<Vec<f64>> {
        let s = self.index.stream(account.id);
        let txs = self.transactions();
        let r = self.index.future_range(txs, account.id, t);
        let end = r.start + s[r.clone()].partition_point(|&i| txs[i as usize].timestamp <= until);
        self.events_or_marker(account, r.start..end)
    }

    pub fn events_or_marker(&self, account: &Account, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        if range.is_empty() {
            vec![self.spec.no_history_event(account)]
        } else {
            self.spec.events(account, &self.index, self.transactions(), range)
        }
    }

    pub fn transaction_features(&self, tx_index: usize) -> Vec<f64> {
        self.spec.transaction_in_context(&self.index, self.transactions(), tx_index)
    }

    /// Numeric fields of the most recent event in `X_{≤t}`: scaled log amount
    /// and scaled gap to the event before it.
    pub fn last_event_numeric(&self, account: AccountId, t: i64) -> Option<[f64; 2]> {
        let txs = self.transactions();
        let s = self.index.stream(account);
        let r = self.index.history_range(txs, account, t);
        let last = r.end.checked_sub(1)?;
        let tx = &txs[s[last] as usize];
        let prev = last.checked_sub(1).map(|p| txs[s[p] as usize].timestamp);
        Some([amount_feature(tx.amount), gap_feature(tx.timestamp, prev)])
    }
}
