//! Numeric encodings of events: per-account event vectors consumed by bank
//! encoders and transaction vectors consumed by scorers.

use super::{Account, HistoryIndex, Transaction, Vocabulary};
use crate::data::FlagCategory;

const AMOUNT_CENTER: f64 = 4.5;
const AMOUNT_SCALE: f64 = 1.5;

pub fn amount_feature(amount: f64) -> f64 {
    (amount.ln() - AMOUNT_CENTER) / AMOUNT_SCALE
}

/// Log-scaled gap in hours since the previous event (0 when there is none).
pub fn gap_feature(now: i64, previous: Option<i64>) -> f64 {
    let hours = previous.map(|p| (now - p).max(0) as f64 / 3600.0).unwrap_or(0.0);
    (1.0 + hours).ln() / 4.0
}

/// Vocabularies and layout for event and transaction vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub merchants: Vocabulary,
    pub currencies: Vocabulary,
    pub regions: usize,
}

impl FeatureSpec {
    /// Builds vocabularies from the training split only.
    pub fn from_training(train: &[Transaction], regions: usize) -> Self {
        Self {
            merchants: Vocabulary::build(train.iter().map(|t| t.merchant_token)),
            currencies: Vocabulary::build(train.iter().map(|t| t.currency_token)),
            regions,
        }
    }

    /// amount, direction, gap, merchant one-hot, currency one-hot, region
    /// one-hot, flag one-hot, no-history marker.
    pub fn event_width(&self) -> usize {
        3 + self.merchants.width() + self.currencies.width() + self.regions + FlagCategory::ALL.len() + 1
    }

    /// amount, ordering-account gap, merchant one-hot, currency one-hot.
    pub fn transaction_width(&self) -> usize {
        2 + self.merchants.width() + self.currencies.width()
    }

    fn push_static(&self, v: &mut Vec<f64>, account: &Account) {
        let start = v.len();
        v.resize(start + self.regions + FlagCategory::ALL.len(), 0.0);
        if (account.region_token as usize) < self.regions {
            v[start + account.region_token as usize] = 1.0;
        }
        v[start + self.regions + account.flag.index()] = 1.0;
    }

    fn push_one_hot(v: &mut Vec<f64>, width: usize, hot: usize) {
        let start = v.len();
        v.resize(start + width, 0.0);
        v[start + hot] = 1.0;
    }

    /// One event of `account`'s stream.
    pub fn event(&self, account: &Account, tx: &Transaction, previous: Option<i64>) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.event_width());
        v.push(amount_feature(tx.amount));
        v.push(if tx.ordering_account == account.id { 1.0 } else { -1.0 });
        v.push(gap_feature(tx.timestamp, previous));
        Self::push_one_hot(&mut v, self.merchants.width(), self.merchants.tokenize(tx.merchant_token));
        Self::push_one_hot(&mut v, self.currencies.width(), self.currencies.tokenize(tx.currency_token));
        self.push_static(&mut v, account);
        v.push(0.0);
        v
    }

    /// Reserved input for an account with no history.
    pub fn no_history_event(&self, account: &Account) -> Vec<f64> {
        let mut v = vec![0.0; 3 + self.merchants.width() + self.currencies.width()];
        self.push_static(&mut v, account);
        v.push(1.0);
        v
    }

    /// Event vectors for positions `range` of the account stream, oldest first.
    pub fn events(
        &self,
        account: &Account,
        index: &HistoryIndex,
        transactions: &[Transaction],
        range: std::ops::Range<usize>,
    ) -> Vec<Vec<f64>> {
        let stream = index.stream(account.id);
        range
            .map(|p| {
                let tx = &transactions[stream[p] as usize];
                let prev = p.checked_sub(1).map(|q| transactions[stream[q] as usize].timestamp);
                self.event(account, tx, prev)
            })
            .collect()
    }

    /// Numeric view of a transaction for the scorer.
    pub fn transaction(&self, tx: &Transaction, ordering_previous: Option<i64>) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.transaction_width());
        v.push(amount_feature(tx.amount));
        v.push(gap_feature(tx.timestamp, ordering_previous));
        Self::push_one_hot(&mut v, self.merchants.width(), self.merchants.tokenize(tx.merchant_token));
        Self::push_one_hot(&mut v, self.currencies.width(), self.currencies.tokenize(tx.currency_token));
        v
    }

    /// Transaction vector with the ordering account's previous event looked up in `index`.
    pub fn transaction_in_context(&self, index: &HistoryIndex, transactions: &[Transaction], tx_index: usize) -> Vec<f64> {
        let tx = &transactions[tx_index];
        let stream = index.stream(tx.ordering_account);
        let pos = stream.partition_point(|&i| (i as usize) < tx_index);
        let prev = pos.checked_sub(1).map(|q| transactions[stream[q] as usize].timestamp);
        self.transaction(tx, prev)
    }
}
