//! The freeze core: wait before confirming, confirm only absent conflict,
//! stop growing forever once conflicting ledgers are seen.
//!
//! Clients run this over witness-extracted ledgers to maintain their
//! confirmed ledger; validators run the identical code with a shorter wait to
//! maintain their bookmarked ledger. Freezing is emergent: once the seen set
//! contains a conflicting pair, any candidate longer than their common prefix
//! conflicts with one of the two, so the confirmed ledger stops growing past
//! that prefix. A frozen party keeps gossiping; that behavior lives in the
//! network layer and is untouched by this state.

use std::collections::{BTreeMap, BTreeSet};

use crate::ledger::{Ledger, Round};

#[derive(Debug, Clone)]
pub struct FreezeCore {
    /// The set of ledgers extracted from structurally valid witnesses.
    seen: BTreeSet<Ledger>,
    confirmed: Ledger,
    /// Wait in rounds between seeing a candidate and confirming it.
    wait: u64,
    timers: BTreeMap<Round, Vec<Ledger>>,
}

impl FreezeCore {
    pub fn new(wait: u64) -> Self {
        Self::with_base(wait, Ledger::empty())
    }

    /// Core whose confirmed ledger starts at `base` (the post-recovery case).
    pub fn with_base(wait: u64, base: Ledger) -> Self {
        FreezeCore { seen: BTreeSet::new(), confirmed: base, wait, timers: BTreeMap::new() }
    }

    pub fn confirmed(&self) -> &Ledger {
        &self.confirmed
    }

    pub fn seen(&self) -> &BTreeSet<Ledger> {
        &self.seen
    }

    pub fn wait(&self) -> u64 {
        self.wait
    }

    /// Records a witness-extracted ledger and schedules its confirmation
    /// check `wait` rounds out. Duplicate candidates still get a timer; the
    /// check is idempotent.
    pub fn observe(&mut self, candidate: Ledger, round: Round) {
        self.seen.insert(candidate.clone());
        self.timers.entry(round + self.wait).or_default().push(candidate);
    }

    /// Fires the timers due this round, in enqueue order. A candidate is
    /// confirmed iff it is consistent with every seen ledger (including ones
    /// that arrived during the wait) and strictly longer than the current
    /// confirmed ledger. Returns each new confirmed value in order.
    pub fn fire_due(&mut self, round: Round) -> Vec<Ledger> {
        let mut confirmed = Vec::new();
        for candidate in self.timers.remove(&round).unwrap_or_default() {
            if candidate.len() <= self.confirmed.len() {
                continue;
            }
            if self.seen.iter().all(|l| candidate.consistent_with(l)) {
                self.confirmed = candidate.clone();
                confirmed.push(candidate);
            }
        }
        confirmed
    }

    /// Drops all pending timers (the freeze-at-recovery action).
    pub fn clear_timers(&mut self) {
        self.timers.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(ids: &[&str]) -> Ledger {
        Ledger::from_ids(ids.iter().copied())
    }

    #[test]
    fn confirms_consistent_longer_candidate_after_wait() {
        let mut c = FreezeCore::new(2);
        c.observe(l(&["t1"]), 0);
        assert!(c.fire_due(1).is_empty());
        assert_eq!(c.fire_due(2), vec![l(&["t1"])]);
        c.observe(l(&["t1", "t2"]), 3);
        assert_eq!(c.fire_due(5), vec![l(&["t1", "t2"])]);
        assert_eq!(c.confirmed(), &l(&["t1", "t2"]));
    }

    #[test]
    fn conflict_seen_during_wait_blocks_confirmation() {
        let mut c = FreezeCore::new(2);
        c.observe(l(&["t1", "t2"]), 0);
        c.observe(l(&["t1", "t3"]), 1);
        assert!(c.fire_due(2).is_empty());
        assert!(c.fire_due(3).is_empty());
        // Frozen past the common prefix, but the prefix itself still confirms.
        c.observe(l(&["t1"]), 4);
        assert_eq!(c.fire_due(6), vec![l(&["t1"])]);
        assert_eq!(c.confirmed(), &l(&["t1"]));
    }

    #[test]
    fn shorter_candidate_never_shrinks_confirmed() {
        let mut c = FreezeCore::new(1);
        c.observe(l(&["t1", "t2"]), 0);
        c.fire_due(1);
        c.observe(l(&["t1"]), 2);
        assert!(c.fire_due(3).is_empty());
        assert_eq!(c.confirmed(), &l(&["t1", "t2"]));
    }

    #[test]
    fn zero_wait_confirms_same_round() {
        let mut c = FreezeCore::new(0);
        c.observe(l(&["t1"]), 5);
        assert_eq!(c.fire_due(5), vec![l(&["t1"])]);
    }
}
