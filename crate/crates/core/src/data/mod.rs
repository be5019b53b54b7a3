//! Synthetic multi-bank payment network: accounts, transactions, fraud
//! labels, temporal splits, tokenisation and per-account history filtering.

mod corpus;
mod generate;
mod history;
pub mod io;
mod vocab;

pub mod features;

use serde::{Deserialize, Serialize};

pub use corpus::Corpus;
pub use generate::{generate, EPOCH_START};
pub use history::{filter_history, HistoryIndex};
pub use vocab::{Vocabulary, UNKNOWN_TOKEN};

use crate::error::{Error, Result};

pub type AccountId = u64;
pub type BankId = u32;

/// One payment event. Field order matches the on-disk column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub amount: f64,
    pub currency_token: u32,
    pub ordering_account: AccountId,
    pub beneficiary_account: AccountId,
    pub ordering_bank: BankId,
    pub beneficiary_bank: BankId,
    pub merchant_token: u32,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagCategory {
    None,
    Review,
    Suspended,
}

impl FlagCategory {
    pub const ALL: [FlagCategory; 3] = [FlagCategory::None, FlagCategory::Review, FlagCategory::Suspended];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_flagged(self) -> bool {
        self != FlagCategory::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub id: AccountId,
    pub bank: BankId,
    pub region_token: u32,
    pub flag: FlagCategory,
    /// Mean of the log-amount distribution.
    pub mean_log_amount: f64,
    /// Relative transaction intensity.
    pub activity_rate: f64,
    pub home_currency: u32,
    pub preferred_merchants: [u32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub banks: u32,
    pub accounts_per_bank: u32,
    pub transactions: usize,
    pub fraud_rate: f64,
    /// Probability that a fraud event is placed on a flagged ordering account.
    pub flag_correlation: f64,
    pub horizon_days: u32,
    pub regions: u32,
    pub merchants: u32,
    pub currencies: u32,
    /// Upward shift of fraudulent amounts in log space.
    pub fraud_amount_shift: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            banks: 8,
            accounts_per_bank: 1000,
            transactions: 100_000,
            fraud_rate: 0.001,
            flag_correlation: 0.9,
            horizon_days: 180,
            regions: 4,
            merchants: 16,
            currencies: 6,
            fraud_amount_shift: 1.5,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.banks == 0 || self.accounts_per_bank == 0 || self.transactions == 0 {
            return err("bank, account and transaction counts must be positive".into());
        }
        if (self.banks as u64) * (self.accounts_per_bank as u64) < 2 {
            return err("at least two accounts are required".into());
        }
        if !(self.fraud_rate > 0.0 && self.fraud_rate <= 0.05) {
            return err(format!("fraud rate {} outside (0, 0.05]", self.fraud_rate));
        }
        if self.fraud_count() == 0 {
            return err(format!(
                "fraud rate {} yields no fraud among {} transactions",
                self.fraud_rate, self.transactions
            ));
        }
        if !(0.0..=1.0).contains(&self.flag_correlation) {
            return err(format!("flag correlation {} outside [0, 1]", self.flag_correlation));
        }
        if self.horizon_days == 0 || (self.transactions as u64) >= self.horizon_days as u64 * 86_400 {
            return err("horizon too short for one-second timestamp resolution".into());
        }
        if self.regions == 0 || self.merchants < 2 || self.currencies == 0 {
            return err("vocabulary sizes must be positive (at least two merchants)".into());
        }
        Ok(())
    }

    pub fn fraud_count(&self) -> usize {
        (self.fraud_rate * self.transactions as f64).round() as usize
    }

    pub fn num_accounts(&self) -> usize {
        self.banks as usize * self.accounts_per_bank as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub accounts: Vec<Account>,
    /// Sorted by strictly increasing timestamp.
    pub transactions: Vec<Transaction>,
}

impl Dataset {
    pub fn account(&self, id: AccountId) -> Option<&Account> {
        match self.accounts.get(id as usize) {
            Some(a) if a.id == id => Some(a),
            _ => self
                .accounts
                .binary_search_by_key(&id, |a| a.id)
                .ok()
                .map(|i| &self.accounts[i]),
        }
    }

    pub fn num_banks(&self) -> usize {
        self.accounts.iter().map(|a| a.bank as usize + 1).max().unwrap_or(0)
    }

    pub fn fraud_count(&self) -> usize {
        self.transactions.iter().filter(|t| t.label == 1).count()
    }
}

/// Number of leading transactions that form the training side of a temporal split.
pub fn split_point(total: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = (train_fraction * total as f64).round() as usize;
    if n == 0 || n >= total {
        return Err(Error::Config(format!(
            "split of {total} transactions at {train_fraction} leaves one side empty"
        )));
    }
    Ok(n)
}

/// Temporal split: the earliest `train_fraction` of transactions train, the rest validate.
pub fn split(transactions: &[Transaction], train_fraction: f64) -> Result<(Vec<Transaction>, Vec<Transaction>)> {
    let n = split_point(transactions.len(), train_fraction)?;
    let mut sorted = transactions.to_vec();
    sorted.sort_by_key(|t| (t.timestamp, t.id));
    let validation = sorted.split_off(n);
    Ok((sorted, validation))
}
