use sha2::{Digest, Sha256};

use crate::data::{AccountId, BankId};
use crate::error::{Error, Result};

pub const PROFILE_FORMAT_VERSION: u32 = 1;

/// A released embedding and the metadata it was released under.
///
/// Wire form is one comma-separated line:
/// `version,bank,account_ref,timestamp,epsilon,mechanism,m,v_1,...,v_m`,
/// with `inf` for a noise-free release.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateProfile {
    pub version: u32,
    pub bank: BankId,
    pub account_ref: String,
    pub timestamp: i64,
    pub epsilon: f64,
    pub mechanism: String,
    pub vector: Vec<f64>,
}

/// Opaque account reference: truncated SHA-256 of a bank salt and the id.
pub fn account_ref(salt: u64, account: AccountId) -> String {
    let mut h = Sha256::new();
    h.update(salt.to_le_bytes());
    h.update(account.to_le_bytes());
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl PrivateProfile {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{}",
            self.version,
            self.bank,
            self.account_ref,
            self.timestamp,
            self.epsilon,
            self.mechanism,
            self.vector.len()
        );
        for v in &self.vector {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        let bad = |what: &str| Error::Format(format!("profile record: bad {what}"));
        if f.len() < 7 {
            return Err(bad("field count"));
        }
        let m: usize = f[6].parse().map_err(|_| bad("dimension"))?;
        if f.len() != 7 + m {
            return Err(bad("vector length"));
        }
        Ok(Self {
            version: f[0].parse().map_err(|_| bad("version"))?,
            bank: f[1].parse().map_err(|_| bad("bank"))?,
            account_ref: f[2].to_string(),
            timestamp: f[3].parse().map_err(|_| bad("timestamp"))?,
            epsilon: f[4].parse().map_err(|_| bad("epsilon"))?,
            mechanism: f[5].to_string(),
            vector: f[7..]
                .iter()
                .map(|v| v.parse().map_err(|_| bad("coordinate")))
                .collect::<Result<_>>()?,
        })
    }
}
