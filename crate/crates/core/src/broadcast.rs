//! Byzantine broadcast of bookmarked ledgers, one instance per sender,
//! via round-indexed signature chains.
//!
//! A chain received in broadcast round `k` must carry at least `k` distinct
//! valid signatures headed by the sender's. A relay that newly extracts a
//! value appends its own signature and forwards. With `t = floor(n'/2)` and
//! `t + 1` broadcast rounds of `delta` simulator rounds each, honest
//! majority is enough for validity and agreement, and each relay delivers at
//! most one value per sender: equivocating or silent senders resolve to
//! nothing.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::crypto::{put_str, Encode, KeyHandle, Signature};
use crate::ledger::{Ledger, Round};
use crate::party::{PartyId, ValidatorSet};

/// Tolerated faults and duration for a relay set of size `n_new`.
pub fn fault_budget(n_new: usize) -> usize {
    n_new / 2
}

pub fn broadcast_rounds(n_new: usize) -> u64 {
    fault_budget(n_new) as u64 + 1
}

/// Total simulator rounds the broadcast occupies.
pub fn duration(n_new: usize, delta: u64) -> u64 {
    broadcast_rounds(n_new) * delta
}

/// Broadcast round index of a message delivered `elapsed` simulator rounds
/// after the broadcast started (clamped to 1 for same-round injections).
pub fn round_index(elapsed: u64, delta: u64) -> u64 {
    elapsed.div_ceil(delta).max(1)
}

fn chain_message(sender: PartyId, value: &Ledger) -> Vec<u8> {
    let mut m = Vec::new();
    put_str(&mut m, "bm");
    put_str(&mut m, &sender.to_string());
    value.encode(&mut m);
    m
}

/// A sender's value plus an ordered list of signatures over it, the sender's
/// first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignatureChain {
    pub sender: PartyId,
    pub value: Ledger,
    pub sigs: Vec<Signature>,
}

impl SignatureChain {
    pub fn originate(key: &KeyHandle, value: Ledger) -> Self {
        let sender = key.owner();
        let sig = key.sign(&chain_message(sender, &value));
        SignatureChain { sender, value, sigs: vec![sig] }
    }

    pub fn extend(&self, key: &KeyHandle) -> Self {
        let mut sigs = self.sigs.clone();
        sigs.push(key.sign(&chain_message(self.sender, &self.value)));
        SignatureChain { sender: self.sender, value: self.value.clone(), sigs }
    }

    /// Signature authenticity only: every signature verifies over this
    /// chain's content. Distinctness and membership are relay-side checks.
    pub fn sigs_verify(&self) -> bool {
        let msg = chain_message(self.sender, &self.value);
        self.sigs.iter().all(|s| s.verify(s.signer(), &msg))
    }

    /// Structural validity: at least `min_len` signatures, all by distinct
    /// relay-set members, all verifying, the sender's first.
    pub fn valid(&self, min_len: usize, relays: &ValidatorSet) -> bool {
        if self.sigs.len() < min_len || self.sigs.is_empty() {
            return false;
        }
        if self.sigs[0].signer() != self.sender {
            return false;
        }
        let msg = chain_message(self.sender, &self.value);
        let mut seen = BTreeSet::new();
        self.sigs.iter().all(|s| {
            relays.contains(s.signer()) && seen.insert(s.signer()) && s.verify(s.signer(), &msg)
        })
    }
}

impl Encode for SignatureChain {
    fn encode(&self, out: &mut Vec<u8>) {
        put_str(out, &self.sender.to_string());
        self.value.encode(out);
        crate::crypto::put_u64(out, self.sigs.len() as u64);
        for s in &self.sigs {
            s.encode(out);
        }
    }
}

/// One relay's state for one sender's broadcast instance.
#[derive(Debug, Clone, Default)]
pub struct DsState {
    extracted: BTreeSet<Ledger>,
}

impl DsState {
    /// Seeds the sender's own instance with its broadcast value.
    pub fn originated(value: Ledger) -> Self {
        let mut extracted = BTreeSet::new();
        extracted.insert(value);
        DsState { extracted }
    }

    /// Processes a chain received in broadcast round `k`. Returns the
    /// extended chain to relay when the value is newly extracted and relaying
    /// is still useful (`k <= fault budget`).
    pub fn on_chain(
        &mut self,
        chain: &SignatureChain,
        k: u64,
        relays: &ValidatorSet,
        my_key: &KeyHandle,
    ) -> Option<SignatureChain> {
        if k > broadcast_rounds(relays.len()) {
            return None;
        }
        if !chain.valid(k as usize, relays) {
            return None;
        }
        if !self.extracted.insert(chain.value.clone()) {
            return None;
        }
        if k <= fault_budget(relays.len()) as u64 && !chain.sigs.iter().any(|s| s.signer() == my_key.owner())
        {
            return Some(chain.extend(my_key));
        }
        None
    }

    /// Final outcome once all broadcast rounds have elapsed: the value iff
    /// exactly one was extracted.
    pub fn deliver(&self) -> Option<&Ledger> {
        if self.extracted.len() == 1 {
            self.extracted.iter().next()
        } else {
            None
        }
    }

    pub fn extracted(&self) -> &BTreeSet<Ledger> {
        &self.extracted
    }
}

/// The new genesis rule: the longest ledger whose extensions were delivered
/// from a strict majority of the relay set. Equivocating and silent senders
/// contribute nothing but still count toward the set size.
pub fn compute_new_genesis(delivered: &[Option<Ledger>], n_new: usize) -> Ledger {
    let counted: Vec<Ledger> = delivered.iter().flatten().cloned().collect();
    crate::ledger::majority_prefix(&counted, n_new)
}

/// Simulator round at which the broadcast started from `r_rec` completes.
pub fn completion_round(r_rec: Round, n_new: usize, delta: u64) -> Round {
    r_rec + duration(n_new, delta)
}
