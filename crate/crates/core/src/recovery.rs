//! The recovery gadget.
//!
//! Part 1 runs at all times: validators bookmark witness-extracted ledgers
//! through the freeze core with a `delta` wait, clients confirm through the
//! same code with a `3*delta` wait, and validators additionally remember
//! every transaction they have seen. Part 2 runs at the recovery round:
//! surviving validators broadcast their bookmarks, agree on the longest
//! majority-bookmarked prefix as the new genesis, vote on the restarted
//! instance, and resume Part 1 on it; clients freeze on the recovery
//! announcement and restart once a strict majority of the new validator set
//! votes for the same instance.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::broadcast::{self, DsState, SignatureChain};
use crate::crypto::{put_str, ContentDigest, Encode, KeyHandle, Signature};
use crate::freezing::FreezeCore;
use crate::internal::{witness_consume, FinalityVote, InstanceId, VotePool, Witness, WitnessError};
use crate::ledger::{Ledger, Round, Transaction, TxId};
use crate::party::{PartyId, ValidatorSet};

fn genesis_vote_message(instance: ContentDigest) -> Vec<u8> {
    let mut m = Vec::new();
    put_str(&mut m, "genesis");
    put_str(&mut m, &instance.hex());
    m
}

/// A validator's vote for the post-recovery instance, carrying the full
/// instance description so clients can adopt the new genesis from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenesisVote {
    pub instance: InstanceId,
    pub sig: Signature,
}

impl GenesisVote {
    pub fn sign(key: &KeyHandle, instance: InstanceId) -> Self {
        let sig = key.sign(&genesis_vote_message(instance.digest()));
        GenesisVote { instance, sig }
    }

    pub fn verify(&self) -> bool {
        self.sig.verify(self.sig.signer(), &genesis_vote_message(self.instance.digest()))
    }
}

impl Encode for GenesisVote {
    fn encode(&self, out: &mut Vec<u8>) {
        self.instance.encode(out);
        self.sig.encode(out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidatorPhase {
    Normal,
    Broadcasting,
    Restarted,
}

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("conflicting genesis quorums: honest majority contract violated")]
    ConflictingGenesisQuorums,
}

/// Validator-side gadget state. `bookmark` is `None` when running the plain
/// freezing protocol, where validators have no Part 1 role.
pub struct ValidatorGadget {
    pub id: PartyId,
    key: KeyHandle,
    wait: u64,
    pub bookmark: Option<FreezeCore>,
    pub pool: VotePool,
    pub pending: Vec<Transaction>,
    pending_ids: BTreeSet<TxId>,
    pub phase: ValidatorPhase,
    pub v_new: Option<ValidatorSet>,
    pub ds: BTreeMap<PartyId, DsState>,
    last_witness: Option<ContentDigest>,
}

impl ValidatorGadget {
    pub fn new(id: PartyId, key: KeyHandle, instance: InstanceId, wait: u64, bookmarks: bool) -> Self {
        ValidatorGadget {
            id,
            key,
            wait,
            bookmark: bookmarks.then(|| FreezeCore::new(wait)),
            pool: VotePool::new(instance),
            pending: Vec::new(),
            pending_ids: BTreeSet::new(),
            phase: ValidatorPhase::Normal,
            v_new: None,
            ds: BTreeMap::new(),
            last_witness: None,
        }
    }

    pub fn bookmarked(&self) -> Ledger {
        self.bookmark.as_ref().map(|c| c.confirmed().clone()).unwrap_or_default()
    }

    fn part1_active(&self) -> bool {
        self.bookmark.is_some() && self.phase != ValidatorPhase::Broadcasting
    }

    pub fn observe_tx(&mut self, tx: &Transaction) -> bool {
        if self.pending_ids.insert(tx.id.clone()) {
            self.pending.push(tx.clone());
            true
        } else {
            false
        }
    }

    pub fn on_vote(&mut self, vote: &FinalityVote) -> bool {
        self.pool.add(vote)
    }

    /// Part 1 handling of a received witness.
    pub fn on_witness(&mut self, w: &Witness, round: Round) -> Result<Ledger, WitnessError> {
        if w.instance.digest() != self.pool.instance().digest() {
            return Err(WitnessError::WrongInstance);
        }
        let ledger = witness_consume(w)?;
        if self.part1_active() {
            if let Some(core) = self.bookmark.as_mut() {
                core.observe(ledger.clone(), round);
            }
        }
        Ok(ledger)
    }

    /// Runs the witness producer over the pool; a new witness is bookmarked
    /// and handed back for gossip.
    pub fn self_witness(&mut self, round: Round) -> Option<(Witness, Ledger)> {
        if !self.part1_active() {
            return None;
        }
        let w = self.pool.produce()?;
        let digest = w.digest();
        if self.last_witness == Some(digest) {
            return None;
        }
        self.last_witness = Some(digest);
        let ledger = witness_consume(&w).expect("self-produced witness");
        self.bookmark.as_mut().unwrap().observe(ledger.clone(), round);
        Some((w, ledger))
    }

    pub fn fire_timers(&mut self, round: Round) -> Vec<Ledger> {
        if !self.part1_active() {
            return Vec::new();
        }
        self.bookmark.as_mut().map(|c| c.fire_due(round)).unwrap_or_default()
    }

    /// Part 2 entry: freeze Part 1 and start broadcasting the bookmark held
    /// at the end of the previous round.
    pub fn on_recover(&mut self, v_new: ValidatorSet) -> SignatureChain {
        assert_eq!(self.phase, ValidatorPhase::Normal, "recover twice");
        self.phase = ValidatorPhase::Broadcasting;
        if let Some(core) = self.bookmark.as_mut() {
            core.clear_timers();
        }
        let value = self.bookmarked();
        let chain = SignatureChain::originate(&self.key, value.clone());
        self.ds.insert(self.id, DsState::originated(value));
        self.v_new = Some(v_new);
        chain
    }

    /// Relays a bookmark chain received in broadcast round `k`.
    pub fn on_chain(&mut self, chain: &SignatureChain, k: u64) -> Option<SignatureChain> {
        let v_new = self.v_new.as_ref()?;
        if !v_new.contains(chain.sender) {
            return None;
        }
        let v_new = v_new.clone();
        let key = self.key.clone();
        self.ds.entry(chain.sender).or_default().on_chain(chain, k, &v_new, &key)
    }

    /// Broadcast completion: the per-sender outcomes and the new genesis.
    pub fn ds_finalize(&self) -> (Vec<(PartyId, Option<Ledger>)>, Ledger) {
        let v_new = self.v_new.as_ref().expect("recover first");
        let delivered: Vec<(PartyId, Option<Ledger>)> = v_new
            .members()
            .iter()
            .map(|s| (*s, self.ds.get(s).and_then(|st| st.deliver().cloned())))
            .collect();
        let outcomes: Vec<Option<Ledger>> = delivered.iter().map(|(_, l)| l.clone()).collect();
        let l_rec = broadcast::compute_new_genesis(&outcomes, v_new.len());
        (delivered, l_rec)
    }

    /// Restarts Part 1 on the new instance and returns the transactions to
    /// carry over: everything seen so far that is not already in the new
    /// genesis.
    pub fn restart(&mut self, instance: InstanceId) -> (GenesisVote, Vec<Transaction>) {
        assert_eq!(self.phase, ValidatorPhase::Broadcasting);
        self.phase = ValidatorPhase::Restarted;
        let vote = GenesisVote::sign(&self.key, instance.clone());
        let carry: Vec<Transaction> =
            self.pending.iter().filter(|tx| !instance.genesis.contains(&tx.id)).cloned().collect();
        if self.bookmark.is_some() {
            self.bookmark = Some(FreezeCore::with_base(self.wait, instance.genesis.clone()));
        }
        self.pool = VotePool::new(instance);
        self.last_witness = None;
        (vote, carry)
    }
}

/// Client-side gadget state, for both the freezing and the recovery
/// protocol; a freezing-protocol client simply never sees a recovery
/// announcement.
pub struct ClientGadget {
    pub id: PartyId,
    pub core: FreezeCore,
    wait: u64,
    pub pool: VotePool,
    /// Buffered votes for instances this client does not (yet) run.
    raw_votes: BTreeMap<ContentDigest, Vec<FinalityVote>>,
    pub frozen: bool,
    pub v_new: Option<ValidatorSet>,
    genesis_votes: BTreeMap<ContentDigest, BTreeMap<PartyId, GenesisVote>>,
    pub restart_round: Option<Round>,
    last_witness: Option<ContentDigest>,
}

impl ClientGadget {
    pub fn new(id: PartyId, instance: InstanceId, wait: u64) -> Self {
        ClientGadget {
            id,
            core: FreezeCore::new(wait),
            wait,
            pool: VotePool::new(instance),
            raw_votes: BTreeMap::new(),
            frozen: false,
            v_new: None,
            genesis_votes: BTreeMap::new(),
            restart_round: None,
            last_witness: None,
        }
    }

    pub fn confirmed(&self) -> &Ledger {
        self.core.confirmed()
    }

    pub fn on_vote(&mut self, vote: &FinalityVote) {
        if vote.instance == self.pool.instance().digest() {
            self.pool.add(vote);
        } else if vote.verify() {
            self.raw_votes.entry(vote.instance).or_default().push(vote.clone());
        }
    }

    pub fn on_witness(&mut self, w: &Witness, round: Round) -> Result<Ledger, WitnessError> {
        if w.instance.digest() != self.pool.instance().digest() {
            return Err(WitnessError::WrongInstance);
        }
        let ledger = witness_consume(w)?;
        if !self.frozen {
            self.core.observe(ledger.clone(), round);
        }
        Ok(ledger)
    }

    pub fn self_witness(&mut self, round: Round) -> Option<(Witness, Ledger)> {
        if self.frozen {
            return None;
        }
        let w = self.pool.produce()?;
        let digest = w.digest();
        if self.last_witness == Some(digest) {
            return None;
        }
        self.last_witness = Some(digest);
        let ledger = witness_consume(&w).expect("self-produced witness");
        self.core.observe(ledger.clone(), round);
        Some((w, ledger))
    }

    pub fn fire_timers(&mut self, round: Round) -> Vec<Ledger> {
        if self.frozen {
            return Vec::new();
        }
        self.core.fire_due(round)
    }

    /// The recovery announcement: freeze immediately, remember the healed
    /// validator set. Returns whether this was the freezing transition.
    pub fn on_recover(&mut self, v_new: ValidatorSet) -> bool {
        if self.frozen {
            return false;
        }
        self.frozen = true;
        self.core.clear_timers();
        self.v_new = Some(v_new);
        true
    }

    pub fn on_genesis_vote(&mut self, gv: &GenesisVote) {
        let Some(v_new) = &self.v_new else { return };
        if !self.frozen || self.restart_round.is_some() {
            return;
        }
        let signer = gv.sig.signer();
        if !v_new.contains(signer) || gv.instance.valset != *v_new || !gv.verify() {
            return;
        }
        self.genesis_votes.entry(gv.instance.digest()).or_default().insert(signer, gv.clone());
    }

    /// Restarts once one instance has genesis votes from a strict majority of
    /// the new validator set. Two quorums at once mean the scenario violated
    /// its honest-majority contract.
    pub fn try_restart(&mut self, round: Round) -> Result<Option<(InstanceId, Ledger)>, RecoveryError> {
        if !self.frozen || self.restart_round.is_some() {
            return Ok(None);
        }
        let Some(v_new) = &self.v_new else { return Ok(None) };
        let q = v_new.quorum();
        let winners: Vec<ContentDigest> = self
            .genesis_votes
            .iter()
            .filter(|(_, votes)| votes.len() >= q)
            .map(|(d, _)| *d)
            .collect();
        match winners.as_slice() {
            [] => Ok(None),
            [digest] => {
                let instance =
                    self.genesis_votes[digest].values().next().unwrap().instance.clone();
                let l_rec = instance.genesis.clone();
                self.core = FreezeCore::with_base(self.wait, l_rec.clone());
                let mut pool = VotePool::new(instance.clone());
                for v in self.raw_votes.remove(digest).unwrap_or_default() {
                    pool.add(&v);
                }
                self.pool = pool;
                self.frozen = false;
                self.restart_round = Some(round);
                self.last_witness = None;
                Ok(Some((instance, l_rec)))
            }
            _ => Err(RecoveryError::ConflictingGenesisQuorums),
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

    fn votes_for(inst: &InstanceId, ks: &KeyStore, signers: &[usize], ids: &[&str]) -> Witness {
        let votes = signers
            .iter()
            .map(|i| FinalityVote::sign(&ks.handle(*i), inst.digest(), l(ids)))
            .collect();
        Witness { instance: inst.clone(), votes }
    }

    #[test]
    fn validator_bookmarks_with_wait() {
        let ks = KeyStore::new(3);
        let inst = InstanceId::original(3);
        let mut v = ValidatorGadget::new(PartyId::validator(0), ks.handle(0), inst.clone(), 2, true);
        let w = votes_for(&inst, &ks, &[0, 1], &["t1"]);
        v.on_witness(&w, 5).unwrap();
        assert!(v.fire_timers(6).is_empty());
        assert_eq!(v.fire_timers(7), vec![l(&["t1"])]);
        assert_eq!(v.bookmarked(), l(&["t1"]));
    }

    #[test]
    fn pending_txs_carry_over_minus_new_genesis() {
        let ks = KeyStore::new(3);
        let inst = InstanceId::original(3);
        let mut v = ValidatorGadget::new(PartyId::validator(0), ks.handle(0), inst, 1, true);
        v.observe_tx(&Transaction::new("t1", 0));
        v.observe_tx(&Transaction::new("t2", 1));
        v.observe_tx(&Transaction::new("t2", 2)); // duplicate id ignored
        v.on_recover(ValidatorSet::full(3));
        let new_inst = InstanceId {
            era: 1,
            genesis: l(&["t1"]),
            valset: ValidatorSet::full(3),
            start_round: 10,
        };
        let (_, carry) = v.restart(new_inst);
        let ids: Vec<&str> = carry.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(ids, vec!["t2"]);
    }

    #[test]
    fn client_freezes_on_recover_and_restarts_on_quorum() {
        let ks = KeyStore::new(3);
        let inst = InstanceId::original(3);
        let mut c = ClientGadget::new(PartyId::client(0), inst.clone(), 3);
        let w = votes_for(&inst, &ks, &[0, 1], &["t1"]);
        c.on_witness(&w, 0).unwrap();
        c.fire_timers(3);
        assert_eq!(c.confirmed(), &l(&["t1"]));

        // Freeze discards pending timers.
        c.on_witness(&votes_for(&inst, &ks, &[0, 1], &["t1", "t2"]), 4).unwrap();
        assert!(c.on_recover(ValidatorSet::from_indices([0, 1])));
        assert!(c.fire_timers(7).is_empty());
        assert_eq!(c.confirmed(), &l(&["t1"]));

        let new_inst = InstanceId {
            era: 1,
            genesis: l(&["t1", "t2"]),
            valset: ValidatorSet::from_indices([0, 1]),
            start_round: 12,
        };
        c.on_genesis_vote(&GenesisVote::sign(&ks.handle(0), new_inst.clone()));
        assert!(c.try_restart(13).unwrap().is_none()); // 1 < quorum of 2
        c.on_genesis_vote(&GenesisVote::sign(&ks.handle(1), new_inst.clone()));
        let (inst1, l_rec) = c.try_restart(13).unwrap().unwrap();
        assert_eq!(inst1, new_inst);
        assert_eq!(l_rec, l(&["t1", "t2"]));
        assert_eq!(c.confirmed(), &l(&["t1", "t2"]));
        assert!(!c.frozen);

        // Votes from outside the new valset never count.
        let mut c2 = ClientGadget::new(PartyId::client(1), InstanceId::original(3), 3);
        c2.on_recover(ValidatorSet::from_indices([0, 1]));
        c2.on_genesis_vote(&GenesisVote::sign(&ks.handle(2), new_inst.clone()));
        assert!(c2.try_restart(13).unwrap().is_none());
    }

    #[test]
    fn old_instance_witnesses_rejected_after_restart() {
        let ks = KeyStore::new(2);
        let inst0 = InstanceId::original(2);
        let mut c = ClientGadget::new(PartyId::client(0), inst0.clone(), 3);
        c.on_recover(ValidatorSet::full(2));
        let inst1 =
            InstanceId { era: 1, genesis: Ledger::empty(), valset: ValidatorSet::full(2), start_round: 9 };
        c.on_genesis_vote(&GenesisVote::sign(&ks.handle(0), inst1.clone()));
        c.on_genesis_vote(&GenesisVote::sign(&ks.handle(1), inst1.clone()));
        c.try_restart(10).unwrap().unwrap();
        let stale = votes_for(&inst0, &ks, &[0, 1], &["t1"]);
        assert_eq!(c.on_witness(&stale, 11), Err(WitnessError::WrongInstance));
    }
}
