//! Discrete-round synchronous network with adversary-schedulable delivery.
//!
//! A message sent by an honest awake party at round `r` reaches every honest
//! party `p` by `max(r, wake_p) + delta`; the adversary may pick any
//! per-recipient delivery round from `r + 1` up to that bound. Parties that
//! wake later receive every broadcast at `wake + delta` by default, which
//! realizes the catch-up a freshly joined client gets from the gossip
//! network. Adversarial injections choose their recipients and rounds
//! freely, but their payloads must pass the signature gate.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::crypto::{ContentDigest, Encode};
use crate::ledger::Round;
use crate::message::Payload;
use crate::party::{PartyId, PartyKind};

pub type MsgId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Sent to every party, present and future.
    Broadcast,
    /// Sent to chosen recipients only (adversarial injections).
    Targeted,
}

#[derive(Debug, Clone)]
struct DeliverySlot {
    round: Round,
    done: bool,
}

pub struct Envelope {
    pub id: MsgId,
    pub sender: PartyId,
    pub payload: Arc<Payload>,
    pub digest: ContentDigest,
    pub sent_round: Round,
    pub scope: Scope,
    pub injected: bool,
    recipients: BTreeMap<PartyId, DeliverySlot>,
}

/// One delivery handed to the runner.
pub struct DeliveryRecord {
    pub msg: MsgId,
    pub sender: PartyId,
    pub recipient: PartyId,
    pub payload: Arc<Payload>,
    pub digest: ContentDigest,
    pub scope: Scope,
}

/// Undelivered slot summary exposed to the adversary.
pub struct InFlight {
    pub msg: MsgId,
    pub sender: PartyId,
    pub digest: ContentDigest,
    pub kind: &'static str,
    pub sent_round: Round,
    pub injected: bool,
    pub pending: Vec<(PartyId, Round)>,
}

pub struct Network {
    delta: u64,
    n: usize,
    /// (wake, sleep) per client index.
    client_sched: Vec<(Round, Option<Round>)>,
    kill_set: BTreeSet<usize>,
    r_rec: Option<Round>,
    next_id: MsgId,
    envelopes: BTreeMap<MsgId, Envelope>,
    queue: BTreeSet<(Round, MsgId, PartyId)>,
}

impl Network {
    pub fn new(
        delta: u64,
        n: usize,
        client_sched: Vec<(Round, Option<Round>)>,
        kill_set: BTreeSet<usize>,
        r_rec: Option<Round>,
    ) -> Self {
        Network {
            delta,
            n,
            client_sched,
            kill_set,
            r_rec,
            next_id: 0,
            envelopes: BTreeMap::new(),
            queue: BTreeSet::new(),
        }
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn validator_alive(&self, index: usize, round: Round) -> bool {
        index < self.n
            && (!self.kill_set.contains(&index) || self.r_rec.is_none_or(|r| round < r))
    }

    pub fn client_awake(&self, index: usize, round: Round) -> bool {
        self.client_sched.get(index).is_some_and(|(wake, sleep)| {
            *wake <= round && sleep.is_none_or(|s| round < s)
        })
    }

    pub fn client_wake(&self, index: usize) -> Option<Round> {
        self.client_sched.get(index).map(|(w, _)| *w)
    }

    pub fn party_present(&self, p: PartyId, round: Round) -> bool {
        match p.kind {
            PartyKind::Validator => self.validator_alive(p.index, round),
            PartyKind::Client => self.client_awake(p.index, round),
        }
    }

    /// Honest broadcast: scheduled to every other party at the default
    /// `max(sent, wake) + delta`.
    pub fn broadcast(&mut self, sender: PartyId, payload: Arc<Payload>, round: Round) -> MsgId {
        let mut recipients = BTreeMap::new();
        for i in 0..self.n {
            let p = PartyId::validator(i);
            if p != sender {
                recipients.insert(p, DeliverySlot { round: round + self.delta, done: false });
            }
        }
        for (i, (wake, sleep)) in self.client_sched.iter().enumerate() {
            let p = PartyId::client(i);
            if p == sender {
                continue;
            }
            let due = round.max(*wake) + self.delta;
            if sleep.is_none_or(|s| due < s) {
                recipients.insert(p, DeliverySlot { round: due, done: false });
            }
        }
        self.push(sender, payload, round, Scope::Broadcast, false, recipients)
    }

    /// Adversarial injection to chosen recipients at chosen rounds. Rejected
    /// if any embedded signature fails to verify or the payload is an
    /// environment-only message. Delivery rounds are clamped to each
    /// recipient's wake; recipients asleep forever by then are skipped.
    pub fn inject(
        &mut self,
        sender: PartyId,
        targets: &[(PartyId, Round)],
        payload: Arc<Payload>,
        now: Round,
    ) -> Result<MsgId, String> {
        if matches!(&*payload, Payload::Recover { .. }) {
            return Err("recover is an environment message".into());
        }
        if !payload.sigs_verify() {
            return Err("payload carries a signature the adversary cannot produce".into());
        }
        let mut recipients = BTreeMap::new();
        for (p, r) in targets {
            if *r < now {
                return Err(format!("delivery round {r} before current round {now}"));
            }
            let due = match p.kind {
                PartyKind::Validator => *r,
                PartyKind::Client => {
                    let Some((wake, sleep)) = self.client_sched.get(p.index).copied() else {
                        continue;
                    };
                    let due = (*r).max(wake);
                    if sleep.is_some_and(|s| due >= s) {
                        continue;
                    }
                    due
                }
            };
            recipients.insert(*p, DeliverySlot { round: due, done: false });
        }
        Ok(self.push(sender, payload, now, Scope::Targeted, true, recipients))
    }

    fn push(
        &mut self,
        sender: PartyId,
        payload: Arc<Payload>,
        sent_round: Round,
        scope: Scope,
        injected: bool,
        recipients: BTreeMap<PartyId, DeliverySlot>,
    ) -> MsgId {
        let digest = payload.digest();
        let id = self.next_id;
        self.next_id += 1;
        for (p, slot) in &recipients {
            self.queue.insert((slot.round, id, *p));
        }
        self.envelopes.insert(
            id,
            Envelope { id, sender, payload, digest, sent_round, scope, injected, recipients },
        );
        id
    }

    /// Adversary reassignment of one pending delivery. Honest traffic is
    /// bounded to `[max(now, sent + 1, wake), max(sent, wake) + delta]`;
    /// injected traffic may move to any future round.
    pub fn reassign(
        &mut self,
        msg: MsgId,
        recipient: PartyId,
        to: Round,
        now: Round,
    ) -> Result<(), String> {
        let env = self.envelopes.get_mut(&msg).ok_or("no such message")?;
        let slot = env.recipients.get_mut(&recipient).ok_or("not a recipient")?;
        if slot.done {
            return Err("already delivered".into());
        }
        let wake = match recipient.kind {
            PartyKind::Validator => 0,
            PartyKind::Client => self.client_sched[recipient.index].0,
        };
        let lower = now.max(env.sent_round + 1).max(wake);
        let upper = env.sent_round.max(wake) + self.delta;
        if !env.injected && (to < lower || to > upper) {
            return Err(format!("round {to} outside [{lower}, {upper}]"));
        }
        if env.injected && to < now {
            return Err("cannot deliver in the past".into());
        }
        self.queue.remove(&(slot.round, msg, recipient));
        slot.round = to;
        self.queue.insert((to, msg, recipient));
        Ok(())
    }

    /// Deliveries due this round, ordered by (message id, recipient).
    /// Recipients no longer present are dropped.
    pub fn due(&mut self, round: Round) -> Vec<DeliveryRecord> {
        let keys: Vec<(Round, MsgId, PartyId)> = self
            .queue
            .range((round, 0, PartyId::validator(0))..(round + 1, 0, PartyId::validator(0)))
            .copied()
            .collect();
        let mut out = Vec::new();
        for key in keys {
            self.queue.remove(&key);
            let (_, id, recipient) = key;
            let present = self.party_present(recipient, round);
            let env = self.envelopes.get_mut(&id).unwrap();
            env.recipients.get_mut(&recipient).unwrap().done = true;
            if !present {
                continue;
            }
            out.push(DeliveryRecord {
                msg: id,
                sender: env.sender,
                recipient,
                payload: Arc::clone(&env.payload),
                digest: env.digest,
                scope: env.scope,
            });
        }
        out
    }

    /// Every undelivered slot, for the adversary's view.
    pub fn in_flight(&self) -> Vec<InFlight> {
        self.envelopes
            .values()
            .filter_map(|env| {
                let pending: Vec<(PartyId, Round)> = env
                    .recipients
                    .iter()
                    .filter(|(_, s)| !s.done)
                    .map(|(p, s)| (*p, s.round))
                    .collect();
                if pending.is_empty() {
                    return None;
                }
                Some(InFlight {
                    msg: env.id,
                    sender: env.sender,
                    digest: env.digest,
                    kind: env.payload.kind_str(),
                    sent_round: env.sent_round,
                    injected: env.injected,
                    pending,
                })
            })
            .collect()
    }

    pub fn payload_of(&self, msg: MsgId) -> Option<&Arc<Payload>> {
        self.envelopes.get(&msg).map(|e| &e.payload)
    }
}
