//! Party identities and validator sets.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Validators are known, always-online and hold signing keys; clients are
/// unknown, possibly sleepy, and only confirm ledgers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyKind {
    Validator,
    Client,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartyId {
    pub kind: PartyKind,
    pub index: usize,
}

impl PartyId {
    pub fn validator(index: usize) -> Self {
        PartyId { kind: PartyKind::Validator, index }
    }

    pub fn client(index: usize) -> Self {
        PartyId { kind: PartyKind::Client, index }
    }

    pub fn is_validator(&self) -> bool {
        self.kind == PartyKind::Validator
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PartyKind::Validator => write!(f, "v{}", self.index),
            PartyKind::Client => write!(f, "c{}", self.index),
        }
    }
}

impl FromStr for PartyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = match s.split_at_checked(1) {
            Some(("v", rest)) => (PartyKind::Validator, rest),
            Some(("c", rest)) => (PartyKind::Client, rest),
            _ => return Err(format!("bad party id {s:?}")),
        };
        let index = rest.parse::<usize>().map_err(|e| format!("bad party id {s:?}: {e}"))?;
        Ok(PartyId { kind, index })
    }
}

impl Serialize for PartyId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartyId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// An immutable ordered set of validators with a strict-majority quorum.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorSet {
    members: Vec<PartyId>,
}

impl ValidatorSet {
    /// Builds a set from validator indices; sorted, deduplicated.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut members: Vec<PartyId> = indices.into_iter().map(PartyId::validator).collect();
        members.sort();
        members.dedup();
        ValidatorSet { members }
    }

    pub fn full(n: usize) -> Self {
        Self::from_indices(0..n)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[PartyId] {
        &self.members
    }

    pub fn contains(&self, p: PartyId) -> bool {
        self.members.binary_search(&p).is_ok()
    }

    /// Smallest integer strictly greater than half the membership.
    pub fn quorum(&self) -> usize {
        self.members.len() / 2 + 1
    }
}

impl crate::crypto::Encode for ValidatorSet {
    fn encode(&self, out: &mut Vec<u8>) {
        crate::crypto::put_u64(out, self.members.len() as u64);
        for m in &self.members {
            crate::crypto::put_str(out, &m.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_is_strict_majority() {
        assert_eq!(ValidatorSet::full(1).quorum(), 1);
        assert_eq!(ValidatorSet::full(2).quorum(), 2);
        assert_eq!(ValidatorSet::full(3).quorum(), 2);
        assert_eq!(ValidatorSet::full(4).quorum(), 3);
        assert_eq!(ValidatorSet::full(10).quorum(), 6);
    }

    #[test]
    fn party_id_round_trips_as_string() {
        for p in [PartyId::validator(0), PartyId::client(17)] {
            let s = p.to_string();
            assert_eq!(s.parse::<PartyId>().unwrap(), p);
        }
        assert!("x3".parse::<PartyId>().is_err());
        assert!("v".parse::<PartyId>().is_err());
    }
}
