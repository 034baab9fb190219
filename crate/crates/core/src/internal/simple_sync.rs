//! A concrete certifiable internal protocol: leader-based certified chain
//! with fixed-length epochs.
//!
//! Epochs last 2Δ rounds. The epoch leader proposes a block with every
//! transaction it knows that is not yet on its longest certified chain; each
//! validator votes for the first leader proposal of the epoch that extends
//! its own longest certified chain, at most once per epoch. A block with a
//! quorum of votes is certified. A validator finalizes a certified block and
//! its ancestors 2Δ rounds after first certifying it, provided it has seen no
//! conflicting certificate (a certified block off its chain at the same or
//! lower height) by then.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::crypto::{put_str, put_u64, ContentDigest, Encode, KeyHandle, Signature};
use crate::ledger::{Ledger, Round, Transaction, TxId};
use crate::party::PartyId;

use super::{InstanceEnv, InstanceId, InternalMsg, InternalProtocol};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub instance: ContentDigest,
    pub epoch: u64,
    /// Digest of the parent block; `None` extends the instance genesis.
    pub parent: Option<ContentDigest>,
    pub height: u64,
    pub txs: Vec<TxId>,
    pub proposer: PartyId,
}

impl Encode for Block {
    fn encode(&self, out: &mut Vec<u8>) {
        put_str(out, &self.instance.hex());
        put_u64(out, self.epoch);
        match &self.parent {
            Some(d) => put_str(out, &d.hex()),
            None => put_str(out, "genesis"),
        }
        put_u64(out, self.height);
        put_u64(out, self.txs.len() as u64);
        for t in &self.txs {
            put_str(out, t);
        }
        put_str(out, &self.proposer.to_string());
    }
}

fn proposal_message(block: &Block) -> Vec<u8> {
    let mut m = Vec::new();
    put_str(&mut m, "prop");
    block.encode(&mut m);
    m
}

fn block_vote_message(instance: ContentDigest, epoch: u64, block: ContentDigest) -> Vec<u8> {
    let mut m = Vec::new();
    put_str(&mut m, "bvote");
    put_str(&mut m, &instance.hex());
    put_u64(&mut m, epoch);
    put_str(&mut m, &block.hex());
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Proposal {
    pub block: Block,
    pub sig: Signature,
}

impl Proposal {
    pub fn verify(&self) -> bool {
        self.sig.signer() == self.block.proposer
            && self.sig.verify(self.block.proposer, &proposal_message(&self.block))
    }
}

impl Encode for Proposal {
    fn encode(&self, out: &mut Vec<u8>) {
        self.block.encode(out);
        self.sig.encode(out);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockVote {
    pub instance: ContentDigest,
    pub epoch: u64,
    pub block: ContentDigest,
    pub sig: Signature,
}

impl BlockVote {
    pub fn verify(&self) -> bool {
        self.sig.verify(self.sig.signer(), &block_vote_message(self.instance, self.epoch, self.block))
    }
}

impl Encode for BlockVote {
    fn encode(&self, out: &mut Vec<u8>) {
        put_str(out, &self.instance.hex());
        put_u64(out, self.epoch);
        put_str(out, &self.block.hex());
        self.sig.encode(out);
    }
}

/// One validator's view of the chain.
#[derive(Debug, Default)]
struct ValState {
    mempool: Vec<TxId>,
    mempool_set: BTreeSet<TxId>,
    blocks: BTreeMap<ContentDigest, Block>,
    /// Votes seen per block digest: signer -> vote epoch.
    votes: BTreeMap<ContentDigest, BTreeMap<PartyId, u64>>,
    /// First round a quorum was observed for a (known) block.
    cert_round: BTreeMap<ContentDigest, Round>,
    /// Certified blocks whose finalization check already ran.
    fin_checked: BTreeSet<ContentDigest>,
    voted_epoch: Option<u64>,
    finalized: Ledger,
}

pub struct SimpleSync {
    instance: InstanceId,
    instance_digest: ContentDigest,
    keys: BTreeMap<PartyId, KeyHandle>,
    delta: u64,
    quorum: usize,
    vals: BTreeMap<PartyId, ValState>,
}

impl SimpleSync {
    pub fn new(instance: InstanceId, keys: BTreeMap<PartyId, KeyHandle>, delta: u64) -> Self {
        let instance_digest = instance.digest();
        let quorum = instance.quorum();
        let mut vals = BTreeMap::new();
        for v in instance.valset.members() {
            vals.insert(*v, ValState { finalized: instance.genesis.clone(), ..Default::default() });
        }
        SimpleSync { instance, instance_digest, keys, delta, quorum, vals }
    }

    fn epoch_len(&self) -> u64 {
        2 * self.delta
    }

    fn epoch_of(&self, round: Round) -> u64 {
        (round - self.instance.start_round) / self.epoch_len()
    }

    fn epoch_start(&self, epoch: u64) -> Round {
        self.instance.start_round + epoch * self.epoch_len()
    }

    fn leader(&self, epoch: u64) -> PartyId {
        let members = self.instance.valset.members();
        members[(epoch % members.len() as u64) as usize]
    }

    /// Highest certified block in `st`'s view, if any; ties break on digest.
    fn tip(st: &ValState) -> Option<(ContentDigest, u64)> {
        st.cert_round
            .keys()
            .filter_map(|d| st.blocks.get(d).map(|b| (*d, b.height)))
            .max_by_key(|(d, h)| (*h, std::cmp::Reverse(*d)))
    }

    /// Chain from genesis to `tip` inclusive, if fully known.
    fn chain(st: &ValState, tip: ContentDigest) -> Option<Vec<ContentDigest>> {
        let mut out = vec![tip];
        let mut cur = tip;
        while let Some(p) = st.blocks.get(&cur)?.parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        Some(out)
    }

    fn chain_ledger(&self, st: &ValState, tip: ContentDigest) -> Option<Ledger> {
        let chain = Self::chain(st, tip)?;
        let mut ledger = self.instance.genesis.clone();
        for d in chain {
            for tx in &st.blocks[&d].txs {
                ledger.push_unique(tx.clone());
            }
        }
        Some(ledger)
    }

    fn maybe_certify(st: &mut ValState, digest: ContentDigest, round: Round, quorum: usize) {
        if st.cert_round.contains_key(&digest) {
            return;
        }
        let Some(block) = st.blocks.get(&digest) else { return };
        let matching = st
            .votes
            .get(&digest)
            .map_or(0, |m| m.values().filter(|e| **e == block.epoch).count());
        if matching >= quorum {
            st.cert_round.insert(digest, round);
        }
    }

    /// A conflicting certificate for `digest`: some certified block off its
    /// chain at the same or lower height.
    fn has_conflicting_cert(st: &ValState, digest: ContentDigest) -> bool {
        let Some(chain) = Self::chain(st, digest) else { return false };
        let height = st.blocks[&digest].height;
        let on_chain: BTreeSet<ContentDigest> = chain.into_iter().collect();
        st.cert_round.keys().any(|d| {
            !on_chain.contains(d) && st.blocks.get(d).is_some_and(|b| b.height <= height)
        })
    }

    fn cast_vote_with(
        keys: &BTreeMap<PartyId, KeyHandle>,
        instance_digest: ContentDigest,
        st: &mut ValState,
        validator: PartyId,
        block: &Block,
        out: &mut Vec<InternalMsg>,
    ) {
        let digest = block.digest();
        let sig = keys[&validator].sign(&block_vote_message(instance_digest, block.epoch, digest));
        let vote = BlockVote { instance: instance_digest, epoch: block.epoch, block: digest, sig };
        st.votes.entry(digest).or_default().insert(validator, block.epoch);
        st.voted_epoch = Some(block.epoch);
        out.push(InternalMsg::BlockVote(vote));
    }

    fn on_proposal(
        &mut self,
        validator: PartyId,
        round: Round,
        p: &Proposal,
        out: &mut Vec<InternalMsg>,
    ) {
        let block = &p.block;
        if block.instance != self.instance_digest
            || !self.instance.valset.contains(block.proposer)
            || self.leader(block.epoch) != block.proposer
            || !p.sig.verify(block.proposer, &proposal_message(block))
        {
            return; // malformed or not from the epoch leader; dropped
        }
        let digest = block.digest();
        let epoch = self.epoch_of(round.max(self.instance.start_round));
        let quorum = self.quorum;
        let instance_digest = self.instance_digest;
        let st = self.vals.get_mut(&validator).expect("valset member");
        st.blocks.entry(digest).or_insert_with(|| block.clone());
        Self::maybe_certify(st, digest, round, quorum);

        if block.epoch != epoch || st.voted_epoch == Some(epoch) {
            return;
        }
        let tip = Self::tip(st);
        let extends = match (tip, block.parent) {
            (None, None) => block.height == 1,
            (Some((td, th)), Some(p)) => p == td && block.height == th + 1,
            _ => false,
        };
        if extends {
            Self::cast_vote_with(&self.keys, instance_digest, st, validator, block, out);
            Self::maybe_certify(st, digest, round, quorum);
        }
    }

    fn on_vote(&mut self, validator: PartyId, round: Round, v: &BlockVote) {
        if v.instance != self.instance_digest
            || !self.instance.valset.contains(v.sig.signer())
            || !v.sig.verify(v.sig.signer(), &block_vote_message(v.instance, v.epoch, v.block))
        {
            return;
        }
        let st = self.vals.get_mut(&validator).expect("valset member");
        st.votes.entry(v.block).or_default().insert(v.sig.signer(), v.epoch);
        Self::maybe_certify(st, v.block, round, self.quorum);
    }
}

impl InternalProtocol for SimpleSync {
    fn kind(&self) -> &'static str {
        "simple_sync"
    }

    fn instance(&self) -> &InstanceId {
        &self.instance
    }

    fn begin_round(&mut self, _round: Round, _env: &InstanceEnv) {}

    fn input_tx(&mut self, validator: PartyId, tx: &Transaction, _round: Round) {
        let st = self.vals.get_mut(&validator).expect("valset member");
        if st.mempool_set.insert(tx.id.clone()) {
            st.mempool.push(tx.id.clone());
        }
    }

    fn handle(&mut self, validator: PartyId, round: Round, msg: &InternalMsg, out: &mut Vec<InternalMsg>) {
        match msg {
            InternalMsg::Proposal(p) => self.on_proposal(validator, round, p, out),
            InternalMsg::BlockVote(v) => self.on_vote(validator, round, v),
        }
    }

    fn step(&mut self, validator: PartyId, round: Round, out: &mut Vec<InternalMsg>) {
        if round < self.instance.start_round {
            return;
        }
        // Finalization: certified blocks whose 2Δ no-equivocation window has
        // elapsed, checked once.
        let due: Vec<ContentDigest> = {
            let st = &self.vals[&validator];
            st.cert_round
                .iter()
                .filter(|(d, r)| round >= *r + 2 * self.delta && !st.fin_checked.contains(*d))
                .map(|(d, _)| *d)
                .collect()
        };
        for digest in due {
            let st = self.vals.get_mut(&validator).unwrap();
            if Self::chain(st, digest).is_none() {
                continue; // parent still unknown; retry next round
            }
            st.fin_checked.insert(digest);
            if Self::has_conflicting_cert(st, digest) {
                continue;
            }
            let ledger = self.chain_ledger(&self.vals[&validator], digest).unwrap();
            let st = self.vals.get_mut(&validator).unwrap();
            if st.finalized.is_prefix_of(&ledger) && ledger.len() > st.finalized.len() {
                st.finalized = ledger;
            }
        }

        // Epoch start: the leader proposes on top of its longest certified chain.
        let epoch = self.epoch_of(round);
        if round == self.epoch_start(epoch) && self.leader(epoch) == validator {
            let st = &self.vals[&validator];
            let tip = Self::tip(st);
            let (parent, height, base) = match tip {
                Some((d, h)) => (Some(d), h + 1, self.chain_ledger(st, d).unwrap()),
                None => (None, 1, self.instance.genesis.clone()),
            };
            let txs: Vec<TxId> =
                st.mempool.iter().filter(|t| !base.contains(t)).cloned().collect();
            let block = Block {
                instance: self.instance_digest,
                epoch,
                parent,
                height,
                txs,
                proposer: validator,
            };
            let sig = self.keys[&validator].sign(&proposal_message(&block));
            let digest = block.digest();
            let quorum = self.quorum;
            let instance_digest = self.instance_digest;
            let st = self.vals.get_mut(&validator).unwrap();
            st.blocks.insert(digest, block.clone());
            out.push(InternalMsg::Proposal(Proposal { block: block.clone(), sig }));
            // The leader votes for its own proposal.
            if st.voted_epoch != Some(epoch) {
                let extends = match (Self::tip(st), block.parent) {
                    (None, None) => true,
                    (Some((td, _)), Some(p)) => p == td,
                    _ => false,
                };
                if extends {
                    Self::cast_vote_with(&self.keys, instance_digest, st, validator, &block, out);
                    Self::maybe_certify(st, digest, round, quorum);
                }
            }
        }
    }

    fn finalized(&self, validator: PartyId) -> &Ledger {
        &self.vals[&validator].finalized
    }
}
