//! Pluggable adversary strategies.
//!
//! A strategy is a deterministic function of the view and the scenario seed.
//! Each round, before anything is delivered, it may inject payloads (signed
//! only with keys it holds) and reassign pending delivery rounds within the
//! synchrony bound. Strategies are registered by name and selected through
//! the scenario config.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::broadcast::SignatureChain;
use crate::crypto::{ContentDigest, Encode, KeyHandle};
use crate::internal::{FinalityVote, InstanceId, Witness};
use crate::ledger::{Ledger, Round};
use crate::message::Payload;
use crate::net::{InFlight, MsgId};
use crate::party::{PartyId, ValidatorSet};

/// Everything the adversary can see: corrupted parties' state and keys, all
/// traffic ever sent, all pending deliveries, and the scenario timeline. It
/// never contains an honest key handle.
pub struct AdversaryView<'a> {
    pub round: Round,
    pub delta: u64,
    pub n: usize,
    pub quorum: usize,
    pub r_maj: Option<Round>,
    pub r_rec: Option<Round>,
    pub v_new: Option<&'a ValidatorSet>,
    pub instance: &'a InstanceId,
    pub corrupted_keys: &'a BTreeMap<PartyId, KeyHandle>,
    /// Current bookmarked ledgers of corrupted validators.
    pub corrupted_bookmarks: BTreeMap<PartyId, Ledger>,
    /// All payloads sent or injected so far, in order.
    pub observed: &'a [(Round, PartyId, Arc<Payload>)],
    pub in_flight: &'a [InFlight],
    pub honest_awake_clients: Vec<PartyId>,
    /// Every honest client, including ones that have not woken yet:
    /// injections aimed at sleepers sit in their backlog until they wake.
    pub honest_clients: Vec<PartyId>,
}

impl AdversaryView<'_> {
    /// Longest finality-vote ledger observed for the current instance; the
    /// natural base to build believable forks on.
    pub fn longest_vote_ledger(&self) -> Ledger {
        let digest = self.instance.digest();
        self.observed
            .iter()
            .filter_map(|(_, _, p)| match &**p {
                Payload::Vote(v) if v.instance == digest => Some(&v.ledger),
                _ => None,
            })
            .max_by_key(|l| (l.len(), std::cmp::Reverse((*l).clone())))
            .cloned()
            .unwrap_or_else(|| self.instance.genesis.clone())
    }

    /// A witness for `ledger` signed by a quorum of corrupted validators, if
    /// the adversary holds enough keys.
    pub fn forge_witness(&self, ledger: &Ledger) -> Option<Payload> {
        let digest = self.instance.digest();
        let keys: Vec<&KeyHandle> = self
            .corrupted_keys
            .iter()
            .filter(|(p, _)| self.instance.valset.contains(**p))
            .take(self.quorum)
            .map(|(_, k)| k)
            .collect();
        if keys.len() < self.quorum {
            return None;
        }
        let votes: Vec<FinalityVote> =
            keys.iter().map(|k| FinalityVote::sign(k, digest, ledger.clone())).collect();
        Some(Payload::Witness(Witness { instance: self.instance.clone(), votes }))
    }

    pub fn first_corrupted(&self) -> Option<PartyId> {
        self.corrupted_keys.keys().next().copied()
    }
}

pub struct Injection {
    pub sender: PartyId,
    pub targets: Vec<(PartyId, Round)>,
    pub payload: Payload,
}

pub struct DelayAssignment {
    pub msg: MsgId,
    pub recipient: PartyId,
    pub round: Round,
}

#[derive(Default)]
pub struct Actions {
    pub injections: Vec<Injection>,
    pub delays: Vec<DelayAssignment>,
}

pub trait Strategy: Send {
    fn name(&self) -> &'static str;
    fn step(&mut self, view: &AdversaryView<'_>, rng: &mut ChaCha8Rng) -> Actions;
}

pub const STRATEGIES: &[&str] =
    &["silent", "double_spend_equivocator", "eve_confuser", "bookmark_liar", "client_rush"];

pub fn build(name: &str, params: &serde_json::Value) -> Result<Box<dyn Strategy>, String> {
    match name {
        "silent" => Ok(Box::new(Silent)),
        "double_spend_equivocator" => Ok(Box::new(DoubleSpend::default())),
        "eve_confuser" => Ok(Box::new(EveConfuser::new(params))),
        "bookmark_liar" => Ok(Box::new(BookmarkLiar)),
        "client_rush" => Ok(Box::new(ClientRush)),
        other => Err(format!("unknown adversary strategy {other:?} (known: {STRATEGIES:?})")),
    }
}

/// Does nothing; the honest-run baseline.
struct Silent;

impl Strategy for Silent {
    fn name(&self) -> &'static str {
        "silent"
    }

    fn step(&mut self, _: &AdversaryView<'_>, _: &mut ChaCha8Rng) -> Actions {
        Actions::default()
    }
}

/// Splits the clients into two groups at the majority round and shows each
/// group a witness for a different extension of the honest tip, with echo
/// traffic between the groups delayed to the synchrony bound. A second wave
/// later probes a single (by then frozen) client with a third fork: frozen
/// parties still gossip, so everyone must see it within one hop.
#[derive(Default)]
struct DoubleSpend {
    launched_at: Option<Round>,
    second_wave_done: bool,
    fork_digests: Vec<ContentDigest>,
}

impl DoubleSpend {
    fn max_out_fork_echoes(&self, view: &AdversaryView<'_>, actions: &mut Actions) {
        for flight in view.in_flight {
            if flight.injected || !self.fork_digests.contains(&flight.digest) {
                continue;
            }
            for (p, _) in &flight.pending {
                actions.delays.push(DelayAssignment {
                    msg: flight.msg,
                    recipient: *p,
                    round: flight.sent_round + view.delta,
                });
            }
        }
    }
}

impl Strategy for DoubleSpend {
    fn name(&self) -> &'static str {
        "double_spend_equivocator"
    }

    fn step(&mut self, view: &AdversaryView<'_>, rng: &mut ChaCha8Rng) -> Actions {
        let mut actions = Actions::default();
        let Some(r_maj) = view.r_maj else { return actions };
        if view.round < r_maj {
            return actions;
        }
        if let Some(launch) = self.launched_at {
            self.max_out_fork_echoes(view, &mut actions);
            if !self.second_wave_done && view.round == launch + 4 * view.delta {
                self.second_wave_done = true;
                let base = view.longest_vote_ledger();
                let fork = base.extended_with(&["dspend-c".to_string()]);
                if let (Some(w), Some(sender), Some(target)) = (
                    view.forge_witness(&fork),
                    view.first_corrupted(),
                    view.honest_awake_clients.first(),
                ) {
                    actions.injections.push(Injection {
                        sender,
                        targets: vec![(*target, view.round)],
                        payload: w,
                    });
                }
            }
            return actions;
        }
        let base = view.longest_vote_ledger();
        let fork_a = base.extended_with(&["dspend-a".to_string()]);
        let fork_b = base.extended_with(&["dspend-b".to_string()]);
        let (Some(wa), Some(wb)) = (view.forge_witness(&fork_a), view.forge_witness(&fork_b))
        else {
            return actions; // not enough keys yet; try next round
        };
        let Some(sender) = view.first_corrupted() else { return actions };
        self.launched_at = Some(view.round);
        self.fork_digests = vec![wa.digest(), wb.digest()];

        // Split every honest client, awake or not: sleepers find their copy
        // when they wake.
        let mut clients = view.honest_clients.clone();
        clients.shuffle(rng);
        let half = clients.len().div_ceil(2);
        let now = view.round;
        let group = |slice: &[PartyId]| slice.iter().map(|p| (*p, now)).collect::<Vec<_>>();
        actions.injections.push(Injection { sender, targets: group(&clients[..half]), payload: wa });
        if clients.len() > half {
            actions
                .injections
                .push(Injection { sender, targets: group(&clients[half..]), payload: wb });
        }
        actions
    }
}

/// The lagging-client story: one client confirms a long ledger, a second
/// client gets stuck behind conflicting evidence, and at recovery the
/// corrupted survivors vouch for the fake fork. Safe recovery must extend
/// the long ledger regardless.
struct EveConfuser {
    alice: usize,
    bob: usize,
    long_fork: Option<(Payload, Payload, ContentDigest)>,
    launched_at: Option<Round>,
    lied: bool,
    fake: Option<Ledger>,
}

impl EveConfuser {
    fn new(params: &serde_json::Value) -> Self {
        let idx = |k: &str, d: usize| params.get(k).and_then(|v| v.as_u64()).map_or(d, |v| v as usize);
        EveConfuser {
            alice: idx("alice", 0),
            bob: idx("bob", 1),
            long_fork: None,
            launched_at: None,
            lied: false,
            fake: None,
        }
    }
}

impl Strategy for EveConfuser {
    fn name(&self) -> &'static str {
        "eve_confuser"
    }

    fn step(&mut self, view: &AdversaryView<'_>, _: &mut ChaCha8Rng) -> Actions {
        let mut actions = Actions::default();
        let Some(r_maj) = view.r_maj else { return actions };
        let now = view.round;

        if now >= r_maj && self.long_fork.is_none() {
            let base = view.longest_vote_ledger();
            let long = base.extended_with(&["adv-long".to_string()]);
            let fake = base.extended_with(&["adv-fork".to_string()]);
            let (Some(w_long), Some(w_fake)) = (view.forge_witness(&long), view.forge_witness(&fake))
            else {
                return actions;
            };
            let sender = view.first_corrupted().unwrap();
            let long_digest = w_long.digest();
            // Alice alone sees the long ledger now; everyone else learns it
            // from her gossip, Bob as late as the bound allows.
            actions.injections.push(Injection {
                sender,
                targets: vec![(PartyId::client(self.alice), now)],
                payload: w_long.clone(),
            });
            self.long_fork = Some((w_long, w_fake, long_digest));
            self.launched_at = Some(now);
            self.fake = Some(fake);
            return actions;
        }

        if let (Some((_, w_fake, long_digest)), Some(launch)) = (&self.long_fork, self.launched_at)
        {
            // Keep Bob's copy of the long witness maximally late.
            for flight in view.in_flight {
                if flight.injected || flight.digest != *long_digest {
                    continue;
                }
                for (p, _) in &flight.pending {
                    if *p == PartyId::client(self.bob) {
                        actions.delays.push(DelayAssignment {
                            msg: flight.msg,
                            recipient: *p,
                            round: flight.sent_round + view.delta,
                        });
                    }
                }
            }
            // Once Alice has confirmed (3 delta past her sighting), surface
            // the conflicting fork to everyone, freezing the network.
            let fork_round = launch + 3 * view.delta + 1;
            if now == fork_round {
                let sender = view.first_corrupted().unwrap();
                let mut targets: Vec<(PartyId, Round)> =
                    view.honest_awake_clients.iter().map(|c| (*c, now)).collect();
                for i in 0..view.n {
                    targets.push((PartyId::validator(i), now));
                }
                actions.injections.push(Injection { sender, targets, payload: w_fake.clone() });
            }
        }

        // At recovery, corrupted survivors claim the fake fork was bookmarked.
        if view.r_rec == Some(now) && !self.lied {
            self.lied = true;
            if let (Some(v_new), Some(fake)) = (view.v_new, &self.fake) {
                for (p, key) in view.corrupted_keys {
                    if !v_new.contains(*p) {
                        continue;
                    }
                    let chain = SignatureChain::originate(key, fake.clone());
                    let targets: Vec<(PartyId, Round)> =
                        v_new.members().iter().map(|m| (*m, now + 1)).collect();
                    actions.injections.push(Injection {
                        sender: *p,
                        targets,
                        payload: Payload::Bookmark(chain),
                    });
                }
            }
        }
        actions
    }
}

/// Runs Part 1 honestly (by staying corrupted-but-idle until recovery) and
/// then broadcasts a fabricated bookmark extension. A minority of liars must
/// not move the new genesis.
struct BookmarkLiar;

impl Strategy for BookmarkLiar {
    fn name(&self) -> &'static str {
        "bookmark_liar"
    }

    fn step(&mut self, view: &AdversaryView<'_>, _: &mut ChaCha8Rng) -> Actions {
        let mut actions = Actions::default();
        if view.r_rec != Some(view.round) {
            return actions;
        }
        let Some(v_new) = view.v_new else { return actions };
        for (p, key) in view.corrupted_keys {
            if !v_new.contains(*p) {
                continue;
            }
            let honest_bookmark =
                view.corrupted_bookmarks.get(p).cloned().unwrap_or_default();
            let fake = honest_bookmark.extended_with(&[format!("adv-lie-{p}")]);
            let chain = SignatureChain::originate(key, fake);
            let targets: Vec<(PartyId, Round)> =
                v_new.members().iter().map(|m| (*m, view.round + 1)).collect();
            actions.injections.push(Injection {
                sender: *p,
                targets,
                payload: Payload::Bookmark(chain),
            });
        }
        actions
    }
}

/// Needs no corruption at all: rushes finality votes and witnesses to
/// clients while holding them back from validators for the full bound. With
/// the standard client wait the bookmark still lands first; with a shortened
/// wait this breaks follow-the-leader.
struct ClientRush;

impl Strategy for ClientRush {
    fn name(&self) -> &'static str {
        "client_rush"
    }

    fn step(&mut self, view: &AdversaryView<'_>, _: &mut ChaCha8Rng) -> Actions {
        let mut actions = Actions::default();
        for flight in view.in_flight {
            if flight.injected || !matches!(flight.kind, "vote" | "witness") {
                continue;
            }
            for (p, due) in &flight.pending {
                let round = if p.is_validator() {
                    flight.sent_round + view.delta
                } else {
                    view.round.max(flight.sent_round + 1)
                };
                if round != *due {
                    actions.delays.push(DelayAssignment { msg: flight.msg, recipient: *p, round });
                }
            }
        }
        actions
    }
}
