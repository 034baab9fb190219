//! The certifiable internal protocol interface: witnesses made of
//! validator-signed ledger snapshots, the deterministic witness consumer, the
//! witness producer, and the pluggable protocol implementations behind them.

pub mod scripted;
pub mod simple_sync;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{put_str, put_u64, ContentDigest, Encode, KeyHandle, Signature};
use crate::ledger::{majority_prefix, Ledger, Round, Transaction, TxId};
use crate::party::{PartyId, ValidatorSet};

/// Identifies one run of the internal protocol. Era 0 is the original
/// instance, era 1 the post-recovery restart. All signed internal-protocol
/// messages bind the instance digest, so messages never cross-validate
/// between instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceId {
    pub era: u32,
    pub genesis: Ledger,
    pub valset: ValidatorSet,
    pub start_round: Round,
}

impl InstanceId {
    pub fn original(n: usize) -> Self {
        InstanceId { era: 0, genesis: Ledger::empty(), valset: ValidatorSet::full(n), start_round: 0 }
    }

    pub fn quorum(&self) -> usize {
        self.valset.quorum()
    }
}

impl Encode for InstanceId {
    fn encode(&self, out: &mut Vec<u8>) {
        put_u64(out, self.era as u64);
        self.genesis.encode(out);
        self.valset.encode(out);
        put_u64(out, self.start_round);
    }
}

fn vote_message(instance: ContentDigest, ledger: &Ledger) -> Vec<u8> {
    let mut m = Vec::new();
    put_str(&mut m, "fvote");
    put_str(&mut m, &instance.hex());
    ledger.encode(&mut m);
    m
}

/// A validator's signature over its internally finalized ledger snapshot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FinalityVote {
    pub instance: ContentDigest,
    pub ledger: Ledger,
    pub sig: Signature,
}

impl FinalityVote {
    pub fn sign(key: &KeyHandle, instance: ContentDigest, ledger: Ledger) -> Self {
        let sig = key.sign(&vote_message(instance, &ledger));
        FinalityVote { instance, ledger, sig }
    }

    pub fn signer(&self) -> PartyId {
        self.sig.signer()
    }

    pub fn verify(&self) -> bool {
        self.sig.verify(self.sig.signer(), &vote_message(self.instance, &self.ledger))
    }
}

impl Encode for FinalityVote {
    fn encode(&self, out: &mut Vec<u8>) {
        put_str(out, &self.instance.hex());
        self.ledger.encode(out);
        self.sig.encode(out);
    }
}

/// A set of finality votes with pairwise-distinct signers: the certificate
/// object the consumer function turns into a ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub instance: InstanceId,
    pub votes: Vec<FinalityVote>,
}

impl Encode for Witness {
    fn encode(&self, out: &mut Vec<u8>) {
        self.instance.encode(out);
        put_u64(out, self.votes.len() as u64);
        for v in &self.votes {
            v.encode(out);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WitnessError {
    #[error("duplicate signer")]
    DuplicateSigner,
    #[error("vote bound to a different instance")]
    WrongInstance,
    #[error("bad or out-of-valset signature")]
    BadSignature,
    #[error("vote ledger does not extend the instance genesis")]
    GenesisMismatch,
    #[error("fewer votes than quorum")]
    BelowQuorum,
}

impl WitnessError {
    /// Stable identifier used in trace records.
    pub fn code(&self) -> &'static str {
        match self {
            WitnessError::DuplicateSigner => "duplicate_signer",
            WitnessError::WrongInstance => "wrong_instance",
            WitnessError::BadSignature => "bad_signature",
            WitnessError::GenesisMismatch => "genesis_mismatch",
            WitnessError::BelowQuorum => "below_quorum",
        }
    }
}

/// The witness consumer: deterministic, non-interactive. Rejects structurally
/// invalid witnesses; otherwise returns the longest ledger whose extensions
/// are vouched for by a strict majority of the instance's validator set.
pub fn witness_consume(w: &Witness) -> Result<Ledger, WitnessError> {
    let mut signers = BTreeSet::new();
    for v in &w.votes {
        if !signers.insert(v.signer()) {
            return Err(WitnessError::DuplicateSigner);
        }
    }
    let instance_digest = w.instance.digest();
    for v in &w.votes {
        if v.instance != instance_digest {
            return Err(WitnessError::WrongInstance);
        }
        if !w.instance.valset.contains(v.signer()) || !v.verify() {
            return Err(WitnessError::BadSignature);
        }
        if !w.instance.genesis.is_prefix_of(&v.ledger) {
            return Err(WitnessError::GenesisMismatch);
        }
    }
    if w.votes.len() < w.instance.quorum() {
        return Err(WitnessError::BelowQuorum);
    }
    let ledgers: Vec<Ledger> = w.votes.iter().map(|v| v.ledger.clone()).collect();
    Ok(majority_prefix(&ledgers, w.instance.valset.len()))
}

/// A party's pool of received finality votes for one instance. Keeps only
/// maximal votes per signer: an honest signer's votes form a chain, so one
/// survives; an equivocating signer can hold several.
#[derive(Debug, Clone)]
pub struct VotePool {
    instance: InstanceId,
    instance_digest: ContentDigest,
    per_signer: BTreeMap<PartyId, Vec<FinalityVote>>,
}

impl VotePool {
    pub fn new(instance: InstanceId) -> Self {
        let instance_digest = instance.digest();
        VotePool { instance, instance_digest, per_signer: BTreeMap::new() }
    }

    pub fn instance(&self) -> &InstanceId {
        &self.instance
    }

    /// Adds a vote if it is valid for this instance and not dominated by an
    /// already-stored vote of the same signer. Returns whether the pool
    /// changed.
    pub fn add(&mut self, vote: &FinalityVote) -> bool {
        if vote.instance != self.instance_digest
            || !self.instance.valset.contains(vote.signer())
            || !vote.verify()
            || !self.instance.genesis.is_prefix_of(&vote.ledger)
        {
            return false;
        }
        let slot = self.per_signer.entry(vote.signer()).or_default();
        if slot.iter().any(|v| vote.ledger.is_prefix_of(&v.ledger)) {
            return false;
        }
        slot.retain(|v| !v.ledger.is_prefix_of(&vote.ledger));
        slot.push(vote.clone());
        slot.sort();
        true
    }

    /// The witness producer: builds a witness maximizing the length of the
    /// consumed ledger over all distinct-signer subsets of the pool, or none
    /// if no quorum subset exists. Ties between equal-length results resolve
    /// to the lexicographically least ledger.
    pub fn produce(&self) -> Option<Witness> {
        let best = self.best_ledger()?;
        // Include every supporting signer's longest vote extending the result.
        let mut votes = Vec::new();
        for slot in self.per_signer.values() {
            let pick = slot
                .iter()
                .filter(|v| best.is_prefix_of(&v.ledger))
                .max_by_key(|v| (v.ledger.len(), std::cmp::Reverse(v.ledger.clone())));
            if let Some(v) = pick {
                votes.push(v.clone());
            }
        }
        let w = Witness { instance: self.instance.clone(), votes };
        debug_assert_eq!(witness_consume(&w).as_ref(), Ok(&best));
        Some(w)
    }

    /// Longest ledger such that a strict majority of the valset has some vote
    /// extending it. Search walks the prefix tree of pooled votes; every
    /// explored node is a vote prefix, so the walk is linear in pooled bytes.
    fn best_ledger(&self) -> Option<Ledger> {
        let n = self.instance.valset.len();
        if 2 * self.per_signer.len() <= n {
            return None;
        }
        let live: Vec<(PartyId, &Ledger)> = self
            .per_signer
            .iter()
            .flat_map(|(s, votes)| votes.iter().map(|v| (*s, &v.ledger)))
            .collect();
        let mut best: Option<Ledger> = None;
        let mut current: Vec<TxId> = Vec::new();
        Self::explore(n, 0, &live, &mut current, &mut best);
        best
    }

    fn explore(
        n: usize,
        depth: usize,
        live: &[(PartyId, &Ledger)],
        current: &mut Vec<TxId>,
        best: &mut Option<Ledger>,
    ) {
        type Group<'a> = (BTreeSet<PartyId>, Vec<(PartyId, &'a Ledger)>);
        if best.as_ref().is_none_or(|b| current.len() > b.len()) {
            *best = Some(Ledger::from_ids(current.iter().cloned()));
        }
        let mut groups: BTreeMap<&TxId, Group> = BTreeMap::new();
        for (signer, ledger) in live {
            if let Some(id) = ledger.get(depth) {
                let entry = groups.entry(id).or_default();
                entry.0.insert(*signer);
                entry.1.push((*signer, ledger));
            }
        }
        for (id, (signers, sub)) in groups {
            if 2 * signers.len() > n {
                current.push(id.clone());
                Self::explore(n, depth + 1, &sub, current, best);
                current.pop();
            }
        }
    }
}

/// Wire messages of the concrete internal protocol implementations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum InternalMsg {
    Proposal(simple_sync::Proposal),
    BlockVote(simple_sync::BlockVote),
}

impl Encode for InternalMsg {
    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            InternalMsg::Proposal(p) => {
                put_str(out, "prop");
                p.encode(out);
            }
            InternalMsg::BlockVote(v) => {
                put_str(out, "bvote");
                v.encode(out);
            }
        }
    }
}

/// Per-round view the runner exposes to an internal protocol instance.
pub struct InstanceEnv<'a> {
    /// Validators of this instance's valset that are alive, awake and honest
    /// this round.
    pub honest_alive: &'a BTreeSet<PartyId>,
}

/// One running instance of a certifiable internal protocol. The object owns
/// the per-validator states of its whole valset; the runner steps honest
/// validators only.
pub trait InternalProtocol {
    fn kind(&self) -> &'static str;
    fn instance(&self) -> &InstanceId;
    /// Called once per round before any validator steps.
    fn begin_round(&mut self, round: Round, env: &InstanceEnv);
    /// Feeds a transaction first seen by `validator` this round.
    fn input_tx(&mut self, validator: PartyId, tx: &Transaction, round: Round);
    /// Processes an inbound message; any reply goes through `out` and is
    /// broadcast by the runner.
    fn handle(&mut self, validator: PartyId, round: Round, msg: &InternalMsg, out: &mut Vec<InternalMsg>);
    /// Per-round protocol actions; outgoing messages are broadcast by the runner.
    fn step(&mut self, validator: PartyId, round: Round, out: &mut Vec<InternalMsg>);
    fn finalized(&self, validator: PartyId) -> &Ledger;
}

/// Which internal protocol implementation a scenario runs, by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InternalSpec {
    /// Concrete leader-based certified chain.
    SimpleSync,
    /// Environment-driven model of any protocol that is certifiably safe and
    /// live with the declared latency under honest majority.
    ScriptedOracle { u_pi: u64 },
}

impl InternalSpec {
    pub fn name(&self) -> &'static str {
        match self {
            InternalSpec::SimpleSync => "simple_sync",
            InternalSpec::ScriptedOracle { .. } => "scripted_oracle",
        }
    }
}

pub fn build_internal(
    spec: &InternalSpec,
    instance: InstanceId,
    keys: BTreeMap<PartyId, KeyHandle>,
    delta: u64,
) -> Box<dyn InternalProtocol> {
    match spec {
        InternalSpec::SimpleSync => Box::new(simple_sync::SimpleSync::new(instance, keys, delta)),
        InternalSpec::ScriptedOracle { u_pi } => {
            Box::new(scripted::ScriptedOracle::new(instance, *u_pi, delta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyStore;

    fn l(ids: &[&str]) -> Ledger {
        Ledger::from_ids(ids.iter().copied())
    }

    fn setup(n: usize) -> (InstanceId, Vec<KeyHandle>) {
        let ks = KeyStore::new(n);
        let inst = InstanceId::original(n);
        let keys = (0..n).map(|i| ks.handle(i)).collect();
        (inst, keys)
    }

    fn vote(inst: &InstanceId, key: &KeyHandle, ids: &[&str]) -> FinalityVote {
        FinalityVote::sign(key, inst.digest(), l(ids))
    }

    #[test]
    fn consume_majority_of_three() {
        let (inst, keys) = setup(3);
        let w = Witness {
            instance: inst.clone(),
            votes: vec![vote(&inst, &keys[0], &["t1"]), vote(&inst, &keys[1], &["t1", "t2"])],
        };
        assert_eq!(witness_consume(&w), Ok(l(&["t1"])));
    }

    #[test]
    fn consume_unanimous_quorum() {
        let (inst, keys) = setup(3);
        let w = Witness {
            instance: inst.clone(),
            votes: vec![vote(&inst, &keys[0], &["t1", "t2"]), vote(&inst, &keys[1], &["t1", "t2"])],
        };
        assert_eq!(witness_consume(&w), Ok(l(&["t1", "t2"])));
    }

    #[test]
    fn consume_rejections() {
        let (inst, keys) = setup(3);
        let below = Witness { instance: inst.clone(), votes: vec![vote(&inst, &keys[0], &["t1"])] };
        assert_eq!(witness_consume(&below), Err(WitnessError::BelowQuorum));

        let dup = Witness {
            instance: inst.clone(),
            votes: vec![vote(&inst, &keys[0], &["t1"]), vote(&inst, &keys[0], &["t1"])],
        };
        assert_eq!(witness_consume(&dup), Err(WitnessError::DuplicateSigner));

        let other = InstanceId { era: 1, ..inst.clone() };
        let wrong = Witness {
            instance: inst.clone(),
            votes: vec![vote(&other, &keys[0], &["t1"]), vote(&inst, &keys[1], &["t1"])],
        };
        assert_eq!(witness_consume(&wrong), Err(WitnessError::WrongInstance));

        let outsider = KeyStore::new(5).handle(4);
        let bad = Witness {
            instance: inst.clone(),
            votes: vec![vote(&inst, &outsider, &["t1"]), vote(&inst, &keys[1], &["t1"])],
        };
        assert_eq!(witness_consume(&bad), Err(WitnessError::BadSignature));

        let rich = InstanceId { genesis: l(&["g"]), ..InstanceId::original(3) };
        let mismatch = Witness {
            instance: rich.clone(),
            votes: vec![vote(&rich, &keys[0], &["t1"]), vote(&rich, &keys[1], &["g", "t1"])],
        };
        assert_eq!(witness_consume(&mismatch), Err(WitnessError::GenesisMismatch));
    }

    #[test]
    fn produce_from_quorum_pool() {
        let (inst, keys) = setup(3);
        let mut pool = VotePool::new(inst.clone());
        assert!(pool.produce().is_none());
        pool.add(&vote(&inst, &keys[0], &["t1", "t2"]));
        pool.add(&vote(&inst, &keys[1], &["t1", "t2"]));
        pool.add(&vote(&inst, &keys[2], &["t1"]));
        let w = pool.produce().unwrap();
        assert_eq!(witness_consume(&w), Ok(l(&["t1", "t2"])));
    }

    #[test]
    fn produce_prefers_reachable_majority_over_longest_votes() {
        // Signer 0 equivocated: its longest vote sits on a dead branch, and a
        // shorter vote is what completes the majority.
        let (inst, keys) = setup(3);
        let mut pool = VotePool::new(inst.clone());
        pool.add(&vote(&inst, &keys[0], &["t9", "t10", "t11"]));
        pool.add(&vote(&inst, &keys[0], &["t1", "t2"]));
        pool.add(&vote(&inst, &keys[1], &["t1", "t2", "t3"]));
        let w = pool.produce().unwrap();
        assert_eq!(witness_consume(&w), Ok(l(&["t1", "t2"])));
    }

    #[test]
    fn minority_cannot_certify_a_conflicting_ledger() {
        // n = 10, adversary holds 4 keys, honest validators vote only along
        // the canonical chain. Exhaustively over every quorum-sized signer
        // subset, any structurally valid witness consumes to a ledger
        // consistent with the canonical one.
        let n = 10;
        let ks = KeyStore::new(n);
        let inst = InstanceId::original(n);
        let canonical = l(&["t1", "t2", "t3"]);
        let conflicting = l(&["t1", "t9", "t9x"]);
        let corrupted = 4usize;
        let vote_of = |i: usize| {
            let ledger = if i < corrupted {
                conflicting.clone()
            } else {
                // Honest snapshots at assorted chain heights.
                Ledger::from_ids(canonical.ids()[..1 + (i % 3)].iter().cloned())
            };
            FinalityVote::sign(&ks.handle(i), inst.digest(), ledger)
        };
        let quorum = inst.quorum();
        let mut tried = 0;
        for mask in 0u32..(1 << n) {
            if (mask.count_ones() as usize) < quorum {
                continue;
            }
            let votes: Vec<FinalityVote> =
                (0..n).filter(|i| mask & (1 << i) != 0).map(vote_of).collect();
            let w = Witness { instance: inst.clone(), votes };
            let ledger = witness_consume(&w).expect("structurally valid");
            assert!(
                ledger.consistent_with(&canonical),
                "mask {mask:#b} certified {ledger}"
            );
            tried += 1;
        }
        assert!(tried > 300, "tried {tried} subsets");
    }

    #[test]
    fn pool_keeps_maximal_votes_per_signer() {
        let (inst, keys) = setup(3);
        let mut pool = VotePool::new(inst.clone());
        assert!(pool.add(&vote(&inst, &keys[0], &["t1"])));
        assert!(pool.add(&vote(&inst, &keys[0], &["t1", "t2"])));
        // Dominated and duplicate votes are no-ops.
        assert!(!pool.add(&vote(&inst, &keys[0], &["t1"])));
        assert!(!pool.add(&vote(&inst, &keys[0], &["t1", "t2"])));
        assert_eq!(pool.per_signer[&PartyId::validator(0)].len(), 1);
    }
}
