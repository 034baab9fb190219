//! Exhaustive broadcast resilience: every relay-set size from 1 to 8, every
//! corruption pattern within the fault budget, and a battery of sender
//! behaviors. Validity, agreement and single-delivery must hold in all of
//! them, with delivery at exactly the configured number of broadcast rounds.
//!
//! The driver works at broadcast-round granularity: an honest message
//! produced in round k arrives in round k+1 at the latest, which is the
//! worst case the simulator's delta-spaced schedule can produce.

use std::collections::BTreeMap;

use thaw_core::broadcast::{broadcast_rounds, fault_budget, DsState, SignatureChain};
use thaw_core::crypto::{KeyHandle, KeyStore};
use thaw_core::ledger::Ledger;
use thaw_core::party::{PartyId, ValidatorSet};

fn l(ids: &[&str]) -> Ledger {
    Ledger::from_ids(ids.iter().copied())
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum SenderBehavior {
    /// Honest broadcast of one value.
    Honest,
    /// Nothing at all.
    Silent,
    /// One value to the first half of the honest relays, another to the rest.
    SplitEquivocate,
    /// Value to everyone, then a fully corrupted-signed chain for a second
    /// value revealed to a single relay in the last possible useful round.
    LateReveal,
}

struct Driver {
    relays: ValidatorSet,
    keys: BTreeMap<PartyId, KeyHandle>,
    corrupted: Vec<PartyId>,
    honest: Vec<PartyId>,
    states: BTreeMap<PartyId, DsState>,
    /// Chains scheduled for (broadcast round, recipient).
    pending: Vec<(u64, PartyId, SignatureChain)>,
}

impl Driver {
    fn new(n: usize, corrupted_mask: u32) -> Self {
        let ks = KeyStore::new(n);
        let relays = ValidatorSet::full(n);
        let keys: BTreeMap<PartyId, KeyHandle> =
            (0..n).map(|i| (PartyId::validator(i), ks.handle(i))).collect();
        let corrupted: Vec<PartyId> =
            (0..n).filter(|i| corrupted_mask & (1 << i) != 0).map(PartyId::validator).collect();
        let honest: Vec<PartyId> =
            (0..n).filter(|i| corrupted_mask & (1 << i) == 0).map(PartyId::validator).collect();
        let states = honest.iter().map(|p| (*p, DsState::default())).collect();
        Driver { relays, keys, corrupted, honest, states, pending: Vec::new() }
    }

    fn run(&mut self, sender: PartyId, behavior: SenderBehavior) -> BTreeMap<PartyId, Option<Ledger>> {
        let n = self.relays.len();
        let t = fault_budget(n) as u64;
        let value_a = l(&["t1", "t2"]);
        let value_b = l(&["t1", "t9"]);
        let sender_key = &self.keys[&sender];

        match behavior {
            SenderBehavior::Honest => {
                let chain = SignatureChain::originate(sender_key, value_a.clone());
                if let Some(st) = self.states.get_mut(&sender) {
                    *st = DsState::originated(value_a.clone());
                }
                for p in self.honest.clone() {
                    if p != sender {
                        self.pending.push((1, p, chain.clone()));
                    }
                }
            }
            SenderBehavior::Silent => {}
            SenderBehavior::SplitEquivocate => {
                let ca = SignatureChain::originate(sender_key, value_a.clone());
                let cb = SignatureChain::originate(sender_key, value_b.clone());
                let targets: Vec<PartyId> =
                    self.honest.iter().filter(|p| **p != sender).copied().collect();
                let half = targets.len() / 2;
                for p in &targets[..half] {
                    self.pending.push((1, *p, ca.clone()));
                }
                for p in &targets[half..] {
                    self.pending.push((1, *p, cb.clone()));
                }
            }
            SenderBehavior::LateReveal => {
                let ca = SignatureChain::originate(sender_key, value_a.clone());
                for p in self.honest.clone() {
                    if p != sender {
                        self.pending.push((1, p, ca.clone()));
                    }
                }
                // Grow a second-value chain through every corrupted key and
                // reveal it to one honest relay as late as it can still be
                // accepted.
                let mut cb = SignatureChain::originate(sender_key, value_b.clone());
                for p in self.corrupted.clone() {
                    if p != sender {
                        cb = cb.extend(&self.keys[&p]);
                    }
                }
                let reveal_round = (cb.sigs.len() as u64).min(t + 1);
                if let Some(target) = self.honest.first().copied() {
                    self.pending.push((reveal_round, target, cb));
                }
            }
        }

        for k in 1..=broadcast_rounds(n) {
            let due: Vec<(PartyId, SignatureChain)> = {
                let (now, later): (Vec<_>, Vec<_>) =
                    self.pending.drain(..).partition(|(kk, _, _)| *kk <= k);
                self.pending = later;
                now.into_iter().map(|(_, p, c)| (p, c)).collect()
            };
            for (p, chain) in due {
                let relays = self.relays.clone();
                let key = self.keys[&p].clone();
                let st = self.states.get_mut(&p).expect("honest relay");
                if let Some(relayed) = st.on_chain(&chain, k, &relays, &key) {
                    for q in self.honest.clone() {
                        if q != p {
                            self.pending.push((k + 1, q, relayed.clone()));
                        }
                    }
                }
            }
        }
        self.honest.iter().map(|p| (*p, self.states[p].deliver().cloned())).collect()
    }
}

#[test]
fn broadcast_properties_hold_for_every_pattern_up_to_8_relays() {
    let mut cases = 0u64;
    for n in 1..=8usize {
        let budget = fault_budget(n);
        for mask in 0u32..(1 << n) {
            let corrupted = mask.count_ones() as usize;
            if corrupted > budget {
                continue;
            }
            for behavior in [
                SenderBehavior::Honest,
                SenderBehavior::Silent,
                SenderBehavior::SplitEquivocate,
                SenderBehavior::LateReveal,
            ] {
                // Honest behavior from an honest sender; the misbehaviors
                // need a corrupted one.
                let sender = match behavior {
                    SenderBehavior::Honest => (0..n)
                        .map(PartyId::validator)
                        .find(|p| mask & (1 << p.index) == 0),
                    _ => (0..n).map(PartyId::validator).find(|p| mask & (1 << p.index) != 0),
                };
                let Some(sender) = sender else { continue };
                let mut driver = Driver::new(n, mask);
                let outcomes = driver.run(sender, behavior);
                cases += 1;

                // Agreement across every honest relay.
                let mut iter = outcomes.values();
                let first = iter.next().expect("at least one honest relay");
                for o in iter {
                    assert_eq!(o, first, "n={n} mask={mask:#b} {behavior:?}");
                }
                // Validity for the honest sender.
                if behavior == SenderBehavior::Honest {
                    assert_eq!(
                        first.as_ref(),
                        Some(&l(&["t1", "t2"])),
                        "n={n} mask={mask:#b}: honest value lost"
                    );
                }
                // An equivocating sender that reached two honest relays is
                // exposed: nothing delivered.
                if behavior == SenderBehavior::SplitEquivocate {
                    let honest_others = (0..n)
                        .filter(|i| mask & (1 << i) == 0 && PartyId::validator(*i) != sender)
                        .count();
                    if honest_others >= 2 {
                        assert_eq!(first, &None, "n={n} mask={mask:#b}: equivocation not voided");
                    }
                }
            }
        }
    }
    println!("checked {cases} (n, corruption pattern, behavior) cases");
    assert!(cases > 900, "checked {cases}");
}

#[test]
fn late_reveal_at_the_cutoff_is_still_agreed() {
    // Worst case: full fault budget, chain revealed in the final accepting
    // round. Every honest relay must still end with the same extracted set.
    for n in 2..=8usize {
        let budget = fault_budget(n);
        if budget == 0 {
            continue;
        }
        let mask = (1u32 << budget) - 1; // corrupt the first `budget` relays
        let sender = PartyId::validator(0);
        let mut driver = Driver::new(n, mask);
        let outcomes = driver.run(sender, SenderBehavior::LateReveal);
        let mut iter = outcomes.values();
        let first = iter.next().unwrap();
        for o in iter {
            assert_eq!(o, first, "n={n}");
        }
        // Both values reached everyone, so the sender resolves to nothing.
        assert_eq!(first, &None, "n={n}: late reveal should void the equivocating sender");
    }
}
