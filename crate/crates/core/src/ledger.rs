//! Ledger algebra: transactions, ordered ledgers, prefix/consistency relations
//! and the majority-prefix operator everything else is built on.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::Encode;

/// Discrete time unit. Round 0 is protocol start.
pub type Round = u64;

/// Opaque transaction identifier, unique within a scenario.
pub type TxId = String;

/// A transaction as handed to validators by the environment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub payload: Vec<u8>,
    pub submit_round: Round,
}

impl Transaction {
    pub fn new(id: impl Into<TxId>, submit_round: Round) -> Self {
        Transaction { id: id.into(), payload: Vec::new(), submit_round }
    }
}

/// An ordered sequence of transaction ids. The empty ledger is valid.
///
/// Ledgers are value objects compared element-wise; chaining and hashing are
/// internal-protocol concerns and do not appear here.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ledger(Vec<TxId>);

impl Ledger {
    pub fn empty() -> Self {
        Ledger(Vec::new())
    }

    /// Builds a ledger from ids. Duplicate ids violate the ledger invariant;
    /// callers are expected to dedup first (checked in debug builds).
    pub fn from_ids<I: IntoIterator<Item = impl Into<TxId>>>(ids: I) -> Self {
        let txs: Vec<TxId> = ids.into_iter().map(Into::into).collect();
        debug_assert!(
            {
                let mut sorted = txs.clone();
                sorted.sort();
                sorted.dedup();
                sorted.len() == txs.len()
            },
            "duplicate tx ids in ledger"
        );
        Ledger(txs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[TxId] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<&TxId> {
        self.0.get(i)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.iter().any(|t| t == id)
    }

    /// Appends `id` unless already present. Returns whether the ledger grew.
    pub fn push_unique(&mut self, id: TxId) -> bool {
        if self.contains(&id) {
            return false;
        }
        self.0.push(id);
        true
    }

    /// `self ++ suffix`, skipping suffix ids already present.
    pub fn extended_with<'a, I: IntoIterator<Item = &'a TxId>>(&self, suffix: I) -> Ledger {
        let mut out = self.clone();
        for id in suffix {
            out.push_unique(id.clone());
        }
        out
    }

    /// Non-strict prefix test: `is_prefix_of(a, a)` holds.
    pub fn is_prefix_of(&self, other: &Ledger) -> bool {
        self.0.len() <= other.0.len() && self.0 == other.0[..self.0.len()]
    }

    /// Consistency: one of the two is a prefix of the other.
    pub fn consistent_with(&self, other: &Ledger) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    /// Longest common prefix of two ledgers.
    pub fn common_prefix(&self, other: &Ledger) -> Ledger {
        let n = self
            .0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count();
        Ledger(self.0[..n].to_vec())
    }
}

impl fmt::Display for Ledger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.join(" "))
    }
}

impl Encode for Ledger {
    fn encode(&self, out: &mut Vec<u8>) {
        crate::crypto::put_u64(out, self.0.len() as u64);
        for id in &self.0 {
            crate::crypto::put_str(out, id);
        }
    }
}

/// The longest ledger `L` such that strictly more than `set_size / 2` of the
/// given ledgers extend `L`. All candidates meeting the threshold form a
/// prefix chain (two majorities intersect), so the longest is unique.
///
/// The empty ledger is returned unconditionally when nothing longer passes,
/// without itself being held to the threshold; this makes the operator total
/// on empty or sparse inputs, which recovery relies on.
pub fn majority_prefix(ledgers: &[Ledger], set_size: usize) -> Ledger {
    let mut live: Vec<&Ledger> = ledgers.iter().collect();
    let mut out: Vec<TxId> = Vec::new();
    loop {
        let depth = out.len();
        // Partition survivors by their next id; at most one id can clear a
        // strict majority of set_size.
        let mut winner: Option<(&TxId, usize)> = None;
        let mut counts: Vec<(&TxId, usize)> = Vec::new();
        for l in &live {
            if let Some(id) = l.get(depth) {
                match counts.iter_mut().find(|(k, _)| *k == id) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((id, 1)),
                }
            }
        }
        for (id, c) in counts {
            if 2 * c > set_size {
                winner = Some((id, c));
            }
        }
        match winner {
            Some((id, _)) => {
                let id = id.clone();
                live.retain(|l| l.get(depth) == Some(&id));
                out.push(id);
            }
            None => return Ledger(out),
        }
    }
}
