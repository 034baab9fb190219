//! Environment-driven internal protocol: models any certifiable protocol
//! that is safe and live with a declared latency under honest majority,
//! without simulating its message flow.
//!
//! While a strict majority of the instance's valset is honest and alive, the
//! oracle maintains one growing canonical ledger: a transaction enters it
//! `u_pi - delta` rounds after every currently honest validator has received
//! it, which leaves exactly one delivery hop for the finality votes honest
//! validators broadcast on growth. Once honest majority is lost the canonical
//! ledger freezes for good; corrupted validators say whatever the adversary
//! makes them say, which happens outside this module.

use std::collections::BTreeMap;

use crate::ledger::{Ledger, Round, Transaction, TxId};
use crate::party::PartyId;

use super::{InstanceEnv, InstanceId, InternalMsg, InternalProtocol};

pub struct ScriptedOracle {
    instance: InstanceId,
    u_pi: u64,
    delta: u64,
    /// First receipt round per (tx, validator).
    receipts: BTreeMap<TxId, BTreeMap<PartyId, Round>>,
    submit_rounds: BTreeMap<TxId, Round>,
    /// Committed once every honest-alive validator has the tx: the max
    /// receipt round within that set.
    t_all: BTreeMap<TxId, Round>,
    canonical: Ledger,
    views: BTreeMap<PartyId, Ledger>,
    frozen: bool,
}

impl ScriptedOracle {
    pub fn new(instance: InstanceId, u_pi: u64, delta: u64) -> Self {
        assert!(u_pi > delta, "scripted oracle latency must exceed delta");
        let views = instance
            .valset
            .members()
            .iter()
            .map(|v| (*v, instance.genesis.clone()))
            .collect();
        let canonical = instance.genesis.clone();
        ScriptedOracle {
            instance,
            u_pi,
            delta,
            receipts: BTreeMap::new(),
            submit_rounds: BTreeMap::new(),
            t_all: BTreeMap::new(),
            canonical,
            views,
            frozen: false,
        }
    }
}

impl InternalProtocol for ScriptedOracle {
    fn kind(&self) -> &'static str {
        "scripted_oracle"
    }

    fn instance(&self) -> &InstanceId {
        &self.instance
    }

    fn begin_round(&mut self, round: Round, env: &InstanceEnv) {
        if 2 * env.honest_alive.len() <= self.instance.valset.len() {
            self.frozen = true; // contract window over; latches
        }
        if self.frozen {
            return;
        }
        for (id, recs) in &self.receipts {
            if self.t_all.contains_key(id) {
                continue;
            }
            if env.honest_alive.iter().all(|v| recs.contains_key(v)) {
                let t = env.honest_alive.iter().map(|v| recs[v]).max().unwrap_or(0);
                self.t_all.insert(id.clone(), t);
            }
        }
        let offset = self.u_pi - self.delta;
        let mut due: Vec<(Round, Round, &TxId)> = self
            .t_all
            .iter()
            .filter(|(id, t)| round >= **t + offset && !self.canonical.contains(id))
            .map(|(id, t)| (*t, self.submit_rounds.get(id).copied().unwrap_or(0), id))
            .collect();
        due.sort();
        let new: Vec<TxId> = due.into_iter().map(|(_, _, id)| id.clone()).collect();
        for id in new {
            self.canonical.push_unique(id);
        }
    }

    fn input_tx(&mut self, validator: PartyId, tx: &Transaction, round: Round) {
        self.receipts.entry(tx.id.clone()).or_default().entry(validator).or_insert(round);
        self.submit_rounds.entry(tx.id.clone()).or_insert(tx.submit_round);
    }

    fn handle(&mut self, _: PartyId, _: Round, _: &InternalMsg, _: &mut Vec<InternalMsg>) {}

    fn step(&mut self, validator: PartyId, _round: Round, _out: &mut Vec<InternalMsg>) {
        let view = self.views.get_mut(&validator).expect("valset member");
        if view != &self.canonical {
            *view = self.canonical.clone();
        }
    }

    fn finalized(&self, validator: PartyId) -> &Ledger {
        &self.views[&validator]
    }
}
