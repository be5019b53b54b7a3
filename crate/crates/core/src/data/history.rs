use std::collections::HashMap;
use std::ops::Range;

use super::{AccountId, Transaction};

/// Per-account event streams: every transaction in which the account is the
/// ordering or beneficiary party, in time order.
#[derive(Debug, Clone)]
pub struct HistoryIndex {
    streams: HashMap<AccountId, Vec<u32>>,
    max_len: usize,
}

impl HistoryIndex {
    /// `transactions` must be sorted by timestamp.
    pub fn build(transactions: &[Transaction], max_len: usize) -> Self {
        let mut streams: HashMap<AccountId, Vec<u32>> = HashMap::new();
        for (i, t) in transactions.iter().enumerate() {
            streams.entry(t.ordering_account).or_default().push(i as u32);
            streams.entry(t.beneficiary_account).or_default().push(i as u32);
        }
        Self { streams, max_len }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Full stream of transaction indices for an account (empty when unknown).
    pub fn stream(&self, account: AccountId) -> &[u32] {
        self.streams.get(&account).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Positions within the account stream of the most recent `max_len`
    /// events with timestamp `<= t`.
    pub fn history_range(&self, transactions: &[Transaction], account: AccountId, t: i64) -> Range<usize> {
        let s = self.stream(account);
        let end = s.partition_point(|&i| transactions[i as usize].timestamp <= t);
        end.saturating_sub(self.max_len)..end
    }

    /// Positions of the first `max_len` events strictly after `t`.
    pub fn future_range(&self, transactions: &[Transaction], account: AccountId, t: i64) -> Range<usize> {
        let s = self.stream(account);
        let start = s.partition_point(|&i| transactions[i as usize].timestamp <= t);
        start..(start + self.max_len).min(s.len())
    }

    pub fn accounts(&self) -> impl Iterator<Item = AccountId> + '_ {
        self.streams.keys().copied()
    }
}

/// Time-ordered history `X_{<=t}` of an account, truncated to the most recent
/// `index.max_len()` events. Unknown accounts yield an empty sequence.
pub fn filter_history<'a>(
    index: &HistoryIndex,
    transactions: &'a [Transaction],
    account: AccountId,
    t: i64,
) -> Vec<&'a Transaction> {
    let s = index.stream(account);
    s[index.history_range(transactions, account, t)]
        .iter()
        .map(|&i| &transactions[i as usize])
        .collect()
}
