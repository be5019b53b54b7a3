//! Comma-separated dataset files with a fixed, documented header line.
//!
//! `transactions.csv` columns: id, timestamp, amount, currency_token,
//! ordering_account, beneficiary_account, ordering_bank, beneficiary_bank,
//! merchant_token, label.
//!
//! `accounts.csv` columns: id, bank, region_token, flag_category (0 none,
//! 1 review, 2 suspended), mean_log_amount, activity_rate, home_currency,
//! preferred_merchant_0, preferred_merchant_1.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{Account, Dataset, FlagCategory, Transaction};
use crate::error::{Error, Result};

pub const TRANSACTION_HEADER: &str = "id,timestamp,amount,currency_token,ordering_account,beneficiary_account,ordering_bank,beneficiary_bank,merchant_token,label";
pub const ACCOUNT_HEADER: &str = "id,bank,region_token,flag_category,mean_log_amount,activity_rate,home_currency,preferred_merchant_0,preferred_merchant_1";

pub fn transactions_to_string(txs: &[Transaction]) -> String {
    let mut s = String::with_capacity(64 * (txs.len() + 1));
    s.push_str(TRANSACTION_HEADER);
    s.push('\n');
    for t in txs {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            t.id,
            t.timestamp,
            t.amount,
            t.currency_token,
            t.ordering_account,
            t.beneficiary_account,
            t.ordering_bank,
            t.beneficiary_bank,
            t.merchant_token,
            t.label
        )
        .expect("string write");
    }
    s
}

pub fn accounts_to_string(accounts: &[Account]) -> String {
    let mut s = String::with_capacity(64 * (accounts.len() + 1));
    s.push_str(ACCOUNT_HEADER);
    s.push('\n');
    for a in accounts {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            a.id,
            a.bank,
            a.region_token,
            a.flag.index(),
            a.mean_log_amount,
            a.activity_rate,
            a.home_currency,
            a.preferred_merchants[0],
            a.preferred_merchants[1]
        )
        .expect("string write");
    }
    s
}

fn field<T: FromStr>(cols: &[&str], i: usize, line: usize) -> Result<T> {
    cols.get(i)
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("line {line}: bad or missing column {i}")))
}

fn body<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        _ => return Err(Error::Format(format!("expected header `{header}`"))),
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 2, l.split(',').collect())))
}

pub fn parse_transactions(text: &str) -> Result<Vec<Transaction>> {
    body(text, TRANSACTION_HEADER)?
        .map(|(n, c)| {
            if c.len() != 10 {
                return Err(Error::Format(format!("line {n}: expected 10 columns, found {}", c.len())));
            }
            Ok(Transaction {
                id: field(&c, 0, n)?,
                timestamp: field(&c, 1, n)?,
                amount: field(&c, 2, n)?,
                currency_token: field(&c, 3, n)?,
                ordering_account: field(&c, 4, n)?,
                beneficiary_account: field(&c, 5, n)?,
                ordering_bank: field(&c, 6, n)?,
                beneficiary_bank: field(&c, 7, n)?,
                merchant_token: field(&c, 8, n)?,
                label: field(&c, 9, n)?,
            })
        })
        .collect()
}

pub fn parse_accounts(text: &str) -> Result<Vec<Account>> {
    body(text, ACCOUNT_HEADER)?
        .map(|(n, c)| {
            if c.len() != 9 {
                return Err(Error::Format(format!("line {n}: expected 9 columns, found {}", c.len())));
            }
            let flag: usize = field(&c, 3, n)?;
            Ok(Account {
                id: field(&c, 0, n)?,
                bank: field(&c, 1, n)?,
                region_token: field(&c, 2, n)?,
                flag: FlagCategory::from_index(flag)
                    .ok_or_else(|| Error::Format(format!("line {n}: flag {flag} out of range")))?,
                mean_log_amount: field(&c, 4, n)?,
                activity_rate: field(&c, 5, n)?,
                home_currency: field(&c, 6, n)?,
                preferred_merchants: [field(&c, 7, n)?, field(&c, 8, n)?],
            })
        })
        .collect()
}

pub fn write_dataset(dir: &std::path::Path, d: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("transactions.csv"), transactions_to_string(&d.transactions))?;
    std::fs::write(dir.join("accounts.csv"), accounts_to_string(&d.accounts))?;
    Ok(())
}

pub fn read_dataset(dir: &std::path::Path) -> Result<Dataset> {
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|_| Error::MissingArtifact {
            path: p.display().to_string(),
            producer: "generate",
        })
    };
    let mut transactions = parse_transactions(&read("transactions.csv")?)?;
    transactions.sort_by_key(|t| (t.timestamp, t.id));
    let mut accounts = parse_accounts(&read("accounts.csv")?)?;
    accounts.sort_by_key(|a| a.id);
    Ok(Dataset {
        accounts,
        transactions,
    })
}
