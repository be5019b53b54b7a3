//! Cross-party messages and the trace that records every one of them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{AccountId, BankId};
use crate::error::{Error, Result};
use crate::ldp::PrivateProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyId {
    Bank(BankId),
    Orchestrator,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Bank(b) => write!(f, "bank:{b}"),
            PartyId::Orchestrator => write!(f, "orchestrator"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Ordering,
    Beneficiary,
}

/// Message kinds allowed to cross a party boundary.
pub const ALLOWED_KINDS: [&str; 3] = ["profile_request", "private_profile", "gradient"];

/// Request for the released profile of `account` as of `timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRequest {
    pub sample: u64,
    pub role: Role,
    pub account: AccountId,
    pub timestamp: i64,
}

/// Upstream gradient for one sample addressed to one bank. The two role
/// components are kept apart; their sum is the combined `∂L/∂z` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMessage {
    pub sample: u64,
    pub bank: BankId,
    pub ordering: Option<Vec<f64>>,
    pub beneficiary: Option<Vec<f64>>,
}

impl GradientMessage {
    /// Messages for every bank: components are present only for the roles the
    /// bank played in the sample, so uninvolved banks receive the zero vector.
    pub fn for_sample(
        sample: u64,
        banks: usize,
        ordering_bank: BankId,
        beneficiary_bank: BankId,
        d_ordering: &[f64],
        d_beneficiary: &[f64],
    ) -> Vec<GradientMessage> {
        (0..banks as BankId)
            .map(|b| GradientMessage {
                sample,
                bank: b,
                ordering: (b == ordering_bank).then(|| d_ordering.to_vec()),
                beneficiary: (b == beneficiary_bank).then(|| d_beneficiary.to_vec()),
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.ordering.is_none() && self.beneficiary.is_none()
    }

    /// Combined vector `I_{β=η}·∇_{z_o} + I_{β=ρ}·∇_{z_b}`.
    pub fn combined(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for part in [&self.ordering, &self.beneficiary].into_iter().flatten() {
            v.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
        v
    }

    fn payload(&self) -> String {
        let fmt = |p: &Option<Vec<f64>>| match p {
            Some(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "),
            None => "-".into(),
        };
        format!("sample={};ordering={};beneficiary={}", self.sample, fmt(&self.ordering), fmt(&self.beneficiary))
    }
}

/// One persisted trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: u64,
    pub kind: String,
    pub sender: String,
    pub receiver: String,
    pub payload: String,
}

/// Log of every cross-party message, streamed to a sink and optionally kept
/// in memory.
pub struct Trace {
    next_id: u64,
    sink: Option<Box<dyn Write + Send>>,
    memory: Option<Vec<TraceRecord>>,
    counts: BTreeMap<String, u64>,
}

impl fmt::Debug for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trace").field("next_id", &self.next_id).field("counts", &self.counts).finish()
    }
}

impl Default for Trace {
    fn default() -> Self {
        Self::disabled()
    }
}

impl Trace {
    /// Counts messages without retaining them.
    pub fn disabled() -> Self {
        Self {
            next_id: 0,
            sink: None,
            memory: None,
            counts: BTreeMap::new(),
        }
    }

    pub fn in_memory() -> Self {
        Self {
            memory: Some(Vec::new()),
            ..Self::disabled()
        }
    }

    pub fn to_writer(sink: Box<dyn Write + Send>) -> Self {
        Self {
            sink: Some(sink),
            ..Self::disabled()
        }
    }

    pub fn record(&mut self, kind: &str, sender: PartyId, receiver: PartyId, payload: String) -> Result<()> {
        let rec = TraceRecord {
            id: self.next_id,
            kind: kind.to_string(),
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            payload,
        };
        self.next_id += 1;
        *self.counts.entry(rec.kind.clone()).or_default() += 1;
        if let Some(w) = &mut self.sink {
            let line = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        if let Some(m) = &mut self.memory {
            m.push(rec);
        }
        Ok(())
    }

    pub fn request(&mut self, from: PartyId, to: BankId, req: &ProfileRequest) -> Result<()> {
        self.record(
            "profile_request",
            from,
            PartyId::Bank(to),
            format!("sample={};role={:?};account={};t={}", req.sample, req.role, req.account, req.timestamp),
        )
    }

    pub fn profile(&mut self, receiver: PartyId, p: &PrivateProfile) -> Result<()> {
        self.record("private_profile", PartyId::Bank(p.bank), receiver, p.to_line())
    }

    pub fn gradient(&mut self, msg: &GradientMessage) -> Result<()> {
        self.record("gradient", PartyId::Orchestrator, PartyId::Bank(msg.bank), msg.payload())
    }

    pub fn records(&self) -> Option<&[TraceRecord]> {
        self.memory.as_deref()
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn len(&self) -> u64 {
        self.next_id
    }

    pub fn is_empty(&self) -> bool {
        self.next_id == 0
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(w) = &mut self.sink {
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_messages_split_by_role() {
        let msgs = GradientMessage::for_sample(4, 3, 1, 1, &[1.0, 2.0], &[0.5, -1.0]);
        assert!(msgs[0].is_zero() && msgs[2].is_zero());
        assert_eq!(msgs[1].combined(2), vec![1.5, 1.0]);
        let msgs = GradientMessage::for_sample(4, 3, 0, 2, &[1.0, 2.0], &[0.5, -1.0]);
        let total: Vec<f64> = (0..2).map(|k| msgs.iter().map(|m| m.combined(2)[k]).sum()).collect();
        assert_eq!(total, vec![1.5, 1.0]);
    }
}
