//! Trace checkers: one verdict per checked property family, computed from
//! nothing but a persisted trace, so re-checking a trace file always yields
//! identical verdicts. Failing verdicts carry a concrete violation witness.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use serde_json::json;

use crate::config::ProtocolMode;
use crate::ledger::{majority_prefix, Ledger, Round, TxId};
use crate::party::{PartyId, PartyKind};
use crate::trace::{EventBody, PayloadRepr, Trace};

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub checker: String,
    pub pass: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<serde_json::Value>,
}

impl Verdict {
    fn pass(checker: &str, detail: impl Into<String>) -> Self {
        Verdict { checker: checker.into(), pass: true, detail: detail.into(), evidence: None }
    }

    fn fail(checker: &str, detail: impl Into<String>, evidence: serde_json::Value) -> Self {
        Verdict { checker: checker.into(), pass: false, detail: detail.into(), evidence: Some(evidence) }
    }
}

pub trait Checker: Sync {
    fn name(&self) -> &'static str;
    fn check(&self, t: &Trace) -> Verdict;
}

pub fn all_checkers() -> Vec<Box<dyn Checker>> {
    vec![
        Box::new(SafetyChecker),
        Box::new(MonotonicityChecker),
        Box::new(LivenessChecker),
        Box::new(FollowTheLeaderChecker),
        Box::new(RecoveryChecker),
        Box::new(BroadcastChecker),
        Box::new(CertifiableSafetyChecker),
        Box::new(NetworkChecker),
    ]
}

pub fn checker_names() -> Vec<&'static str> {
    all_checkers().iter().map(|c| c.name()).collect()
}

pub fn by_name(name: &str) -> Option<Box<dyn Checker>> {
    all_checkers().into_iter().find(|c| c.name() == name)
}

pub fn check_all(t: &Trace) -> Vec<Verdict> {
    all_checkers().iter().map(|c| c.check(t)).collect()
}

/// Which checker carries each checked property. Exhaustive by construction:
/// a test fails if a registered checker is absent here or vice versa.
pub const PROPERTY_MANIFEST: &[(&str, &str)] = &[
    ("client-safety", "safety"),
    ("always-safe-under-majority-corruption", "safety"),
    ("confirmed-ledgers-never-shrink", "monotonicity"),
    ("bookmarks-grow-between-restarts", "monotonicity"),
    ("liveness-with-latency", "liveness"),
    ("liveness-recovers-after-healing", "liveness"),
    ("follow-the-leader", "follow_the_leader"),
    ("bookmark-mutual-consistency", "recovery"),
    ("new-genesis-dominates-confirmed", "recovery"),
    ("new-genesis-extends-common-bookmark-prefix", "recovery"),
    ("restart-agreement", "recovery"),
    ("broadcast-validity", "broadcast"),
    ("broadcast-agreement", "broadcast"),
    ("broadcast-single-delivery", "broadcast"),
    ("broadcast-duration-exact", "broadcast"),
    ("certifiable-safety-under-honest-majority", "certifiable_safety"),
    ("bounded-delivery-with-gossip", "network"),
];

fn ledger_of(ids: &[TxId]) -> Ledger {
    Ledger::from_ids(ids.iter().cloned())
}

/// Shared trace indexes.
struct Ctx<'a> {
    t: &'a Trace,
    corrupt: BTreeMap<PartyId, Round>,
    /// Confirmed-ledger history per honest client: Confirm events plus
    /// restart adoptions, in trace order.
    confirms: BTreeMap<PartyId, Vec<(Round, Ledger)>>,
    bookmarks: BTreeMap<PartyId, Vec<(Round, Ledger)>>,
}

impl<'a> Ctx<'a> {
    fn new(t: &'a Trace) -> Self {
        let mut corrupt = BTreeMap::new();
        let mut confirms: BTreeMap<PartyId, Vec<(Round, Ledger)>> = BTreeMap::new();
        let mut bookmarks: BTreeMap<PartyId, Vec<(Round, Ledger)>> = BTreeMap::new();
        for e in &t.events {
            let Some(p) = e.party_id() else { continue };
            match &e.body {
                EventBody::Corrupt => {
                    corrupt.entry(p).or_insert(e.round);
                }
                EventBody::Confirm { ledger } if p.kind == PartyKind::Client => {
                    confirms.entry(p).or_default().push((e.round, ledger_of(ledger)));
                }
                EventBody::Restart { ledger, .. } if p.kind == PartyKind::Client => {
                    confirms.entry(p).or_default().push((e.round, ledger_of(ledger)));
                }
                EventBody::Bookmark { ledger } => {
                    bookmarks.entry(p).or_default().push((e.round, ledger_of(ledger)));
                }
                _ => {}
            }
        }
        Ctx { t, corrupt, confirms, bookmarks }
    }

    fn honest_at(&self, p: PartyId, r: Round) -> bool {
        self.corrupt.get(&p).is_none_or(|c| r < *c)
    }

    fn n(&self) -> usize {
        self.t.meta.config.n
    }

    fn r_rec(&self) -> Option<Round> {
        self.t.meta.config.r_rec
    }

    fn validator_alive(&self, i: usize, r: Round) -> bool {
        !self.t.meta.config.kill.contains(&i) || self.r_rec().is_none_or(|rr| r < rr)
    }

    fn v_new_indices(&self) -> Vec<usize> {
        let kill: BTreeSet<usize> = self.t.meta.config.kill.iter().copied().collect();
        (0..self.n()).filter(|i| !kill.contains(i)).collect()
    }

    fn honest_alive_validators(&self, r: Round) -> BTreeSet<usize> {
        (0..self.n())
            .filter(|i| self.validator_alive(*i, r) && self.honest_at(PartyId::validator(*i), r))
            .collect()
    }
}

/// Pairwise consistency of a ledger set via the chain property: sorted by
/// length, every ledger must be a prefix of the next. Returns the first
/// offending (shorter, longer) pair.
fn chain_violation(
    mut ledgers: Vec<(Ledger, PartyId, Round)>,
) -> Option<[(Ledger, PartyId, Round); 2]> {
    ledgers.sort_by_key(|(l, _, _)| l.len());
    for w in ledgers.windows(2) {
        if !w[0].0.is_prefix_of(&w[1].0) {
            return Some([w[0].clone(), w[1].clone()]);
        }
    }
    None
}

struct SafetyChecker;

impl Checker for SafetyChecker {
    fn name(&self) -> &'static str {
        "safety"
    }

    fn check(&self, t: &Trace) -> Verdict {
        let ctx = Ctx::new(t);
        let mut all = Vec::new();
        for (p, entries) in &ctx.confirms {
            for (r, l) in entries {
                all.push((l.clone(), *p, *r));
            }
        }
        let count = all.len();
        match chain_violation(all) {
            None => {
                Verdict::pass(self.name(), format!("{count} confirmations, all mutually consistent"))
            }
            Some([(la, pa, ra), (lb, pb, rb)]) => Verdict::fail(
                self.name(),
                format!("{pa} confirmed at round {ra} inconsistently with {pb} at round {rb}"),
                json!({
                    "first": {"party": pa.to_string(), "round": ra, "ledger": la.ids()},
                    "second": {"party": pb.to_string(), "round": rb, "ledger": lb.ids()},
                }),
            ),
        }
    }
}

struct MonotonicityChecker;

impl Checker for MonotonicityChecker {
    fn name(&self) -> &'static str {
        "monotonicity"
    }

    fn check(&self, t: &Trace) -> Verdict {
        let ctx = Ctx::new(t);
        // Clients: confirmed ledgers never shrink, across the restart too.
        for (p, entries) in &ctx.confirms {
            for w in entries.windows(2) {
                if !w[0].1.is_prefix_of(&w[1].1) {
                    return Verdict::fail(
                        self.name(),
                        format!("{p} confirmed ledger shrank at round {}", w[1].0),
                        json!({
                            "party": p.to_string(),
                            "before": {"round": w[0].0, "ledger": w[0].1.ids()},
                            "after": {"round": w[1].0, "ledger": w[1].1.ids()},
                        }),
                    );
                }
            }
        }
        // Validators: bookmarks grow within an instance; the restart may
        // rebase them.
        let mut last: BTreeMap<PartyId, Ledger> = BTreeMap::new();
        for e in &t.events {
            let Some(p) = e.party_id() else { continue };
            match &e.body {
                EventBody::Restart { .. } if p.is_validator() => {
                    last.remove(&p);
                }
                EventBody::Bookmark { ledger } => {
                    let l = ledger_of(ledger);
                    if let Some(prev) = last.get(&p) {
                        if !prev.is_prefix_of(&l) {
                            return Verdict::fail(
                                self.name(),
                                format!("{p} bookmark shrank at round {}", e.round),
                                json!({"party": p.to_string(), "round": e.round}),
                            );
                        }
                    }
                    last.insert(p, l);
                }
                _ => {}
            }
        }
        Verdict::pass(self.name(), "confirmed and bookmarked ledgers only ever extend")
    }
}

/// Inclusive liveness windows for a trace.
fn liveness_windows(t: &Trace) -> Vec<(Round, Round)> {
    let horizon = t.meta.config.horizon;
    let mut out = Vec::new();
    match (t.meta.config.r_maj, t.meta.config.r_rec) {
        (None, _) => out.push((0, horizon)),
        (Some(m), None) => {
            if m > 0 {
                out.push((0, m - 1));
            }
        }
        (Some(m), Some(rec)) => {
            if m > 0 {
                out.push((0, m - 1));
            }
            let u_rec = t.meta.u_pi
                + t.meta.u_bc.expect("recovery trace has u_bc")
                + t.meta.config.delta
                + t.meta.client_wait;
            if rec + u_rec < horizon {
                out.push((rec + u_rec + 1, horizon));
            }
        }
    }
    out
}

/// First receipt of each tx by each validator: environment inputs plus
/// delivered tx payloads.
fn tx_receipts(t: &Trace) -> BTreeMap<TxId, BTreeMap<usize, Round>> {
    let mut digest_to_tx: BTreeMap<String, TxId> = BTreeMap::new();
    for e in &t.events {
        if let EventBody::Send { digest, payload: PayloadRepr::Tx { id }, .. }
        | EventBody::Inject { digest, payload: PayloadRepr::Tx { id }, .. } = &e.body
        {
            digest_to_tx.entry(digest.clone()).or_insert_with(|| id.clone());
        }
    }
    let mut receipts: BTreeMap<TxId, BTreeMap<usize, Round>> = BTreeMap::new();
    for e in &t.events {
        let Some(p) = e.party_id() else { continue };
        if !p.is_validator() {
            continue;
        }
        match &e.body {
            EventBody::TxInput { id } => {
                receipts.entry(id.clone()).or_default().entry(p.index).or_insert(e.round);
            }
            EventBody::Deliver { digest, .. } => {
                if let Some(id) = digest_to_tx.get(digest) {
                    receipts.entry(id.clone()).or_default().entry(p.index).or_insert(e.round);
                }
            }
            _ => {}
        }
    }
    receipts
}

struct LivenessChecker;

impl Checker for LivenessChecker {
    fn name(&self) -> &'static str {
        "liveness"
    }

    fn check(&self, t: &Trace) -> Verdict {
        let ctx = Ctx::new(t);
        let windows = liveness_windows(t);
        let u = t.meta.u_pi + t.meta.client_wait;
        let horizon = t.meta.config.horizon;
        if windows.is_empty() {
            return Verdict::pass(self.name(), "no liveness window in this trace");
        }

        let receipts = tx_receipts(t);
        // First round at which every honest, alive validator holds the tx.
        let mut t_all: BTreeMap<&TxId, Round> = BTreeMap::new();
        for (id, per_validator) in &receipts {
            let mut candidates: BTreeSet<Round> = per_validator.values().copied().collect();
            candidates.extend(ctx.corrupt.values().copied());
            candidates.extend(ctx.r_rec());
            for cand in candidates {
                let honest = ctx.honest_alive_validators(cand);
                if !honest.is_empty()
                    && honest.iter().all(|v| per_validator.get(v).is_some_and(|r| *r <= cand))
                {
                    t_all.insert(id, cand);
                    break;
                }
            }
        }

        // First confirmed round per (client, tx).
        let mut first_confirmed: BTreeMap<(PartyId, &TxId), Round> = BTreeMap::new();
        for (p, entries) in &ctx.confirms {
            let mut seen: BTreeSet<&TxId> = BTreeSet::new();
            for (r, l) in entries {
                for id in l.ids() {
                    if let Some((key, _)) = receipts.get_key_value(id) {
                        if seen.insert(key) {
                            first_confirmed.insert((*p, key), *r);
                        }
                    }
                }
            }
        }

        let mut worst: Option<u64> = None;
        for (id, t_all) in &t_all {
            for (k, entry) in t.meta.config.clients.iter().enumerate() {
                let p = PartyId::client(k);
                if ctx.corrupt.contains_key(&p) {
                    continue;
                }
                let confirmed = first_confirmed.get(&(p, *id)).copied();
                let premise_start = (*t_all).max(entry.wake) + u + 1;
                let end = [Some(horizon), entry.sleep.map(|s| s.saturating_sub(1))]
                    .into_iter()
                    .flatten()
                    .min()
                    .unwrap();
                let first_obligated = windows
                    .iter()
                    .filter_map(|(lo, hi)| {
                        let lo = (*lo).max(premise_start);
                        (lo <= (*hi).min(end)).then_some(lo)
                    })
                    .min();
                if let Some(r) = first_obligated {
                    if confirmed.is_none_or(|c| c > r) {
                        return Verdict::fail(
                            self.name(),
                            format!(
                                "tx {id:?} known to all honest validators by {t_all} missing from {p} at round {r} (bound u={u})"
                            ),
                            json!({
                                "tx": id,
                                "client": p.to_string(),
                                "t_all": t_all,
                                "deadline": r,
                                "confirmed_at": confirmed,
                            }),
                        );
                    }
                    // Latency only compares to the bound when the tx's own
                    // premise round was the deadline, not a window edge.
                    if let (Some(c), true) = (confirmed, r == premise_start) {
                        let lat = c.saturating_sub((*t_all).max(entry.wake));
                        if worst.is_none_or(|w| lat > w) {
                            worst = Some(lat);
                        }
                    }
                }
            }
        }
        let observed =
            worst.map_or("no obligated tx".to_string(), |w| format!("worst observed latency {w}"));
        Verdict::pass(self.name(), format!("bound u={u} held; {observed}"))
    }
}

struct FollowTheLeaderChecker;

impl Checker for FollowTheLeaderChecker {
    fn name(&self) -> &'static str {
        "follow_the_leader"
    }

    fn check(&self, t: &Trace) -> Verdict {
        if t.meta.config.protocol != ProtocolMode::Recovery {
            return Verdict::pass(self.name(), "not applicable to the freezing protocol");
        }
        let ctx = Ctx::new(t);
        let limit = ctx.r_rec().unwrap_or(t.meta.config.horizon + 1);
        let mut bm: BTreeMap<usize, Ledger> = BTreeMap::new();
        let mut checked = 0usize;
        for e in &t.events {
            if e.round >= limit {
                break;
            }
            let Some(p) = e.party_id() else { continue };
            match &e.body {
                EventBody::Bookmark { ledger } if p.is_validator() => {
                    bm.insert(p.index, ledger_of(ledger));
                }
                EventBody::Confirm { ledger } if p.kind == PartyKind::Client => {
                    let confirmed = ledger_of(ledger);
                    for i in 0..ctx.n() {
                        let v = PartyId::validator(i);
                        if !ctx.validator_alive(i, e.round) || !ctx.honest_at(v, e.round) {
                            continue;
                        }
                        checked += 1;
                        let bookmark = bm.get(&i).cloned().unwrap_or_default();
                        if !confirmed.is_prefix_of(&bookmark) {
                            return Verdict::fail(
                                self.name(),
                                format!("{p} confirmed past {v}'s bookmark at round {}", e.round),
                                json!({
                                    "client": p.to_string(),
                                    "validator": v.to_string(),
                                    "round": e.round,
                                    "confirmed": confirmed.ids(),
                                    "bookmarked": bookmark.ids(),
                                }),
                            );
                        }
                    }
                }
                _ => {}
            }
        }
        Verdict::pass(self.name(), format!("{checked} confirm/bookmark pairs ordered correctly"))
    }
}

struct RecoveryChecker;

impl Checker for RecoveryChecker {
    fn name(&self) -> &'static str {
        "recovery"
    }

    fn check(&self, t: &Trace) -> Verdict {
        let ctx = Ctx::new(t);
        let Some(r_rec) = ctx.r_rec() else {
            return Verdict::pass(self.name(), "no recovery scheduled");
        };
        let expected_round = r_rec + t.meta.u_bc.expect("recovery trace has u_bc");

        // Restart agreement: one genesis, one instance, at the exact round.
        let mut l_rec: Option<Ledger> = None;
        let mut instances: BTreeSet<String> = BTreeSet::new();
        for e in &t.events {
            match &e.body {
                EventBody::NewGenesis { ledger } => {
                    if e.round != expected_round {
                        return Verdict::fail(
                            self.name(),
                            format!(
                                "new genesis computed at round {} instead of {expected_round}",
                                e.round
                            ),
                            json!({"party": e.party, "round": e.round}),
                        );
                    }
                    let l = ledger_of(ledger);
                    if let Some(prev) = &l_rec {
                        if *prev != l {
                            return Verdict::fail(
                                self.name(),
                                "honest validators disagree on the new genesis".to_string(),
                                json!({"party": e.party, "ledger": l.ids(), "other": prev.ids()}),
                            );
                        }
                    } else {
                        l_rec = Some(l);
                    }
                }
                EventBody::Restart { instance, .. } => {
                    instances.insert(instance.clone());
                }
                _ => {}
            }
        }
        let Some(l_rec) = l_rec else {
            return Verdict::fail(self.name(), "recovery never completed", json!({}));
        };
        if instances.len() > 1 {
            return Verdict::fail(
                self.name(),
                "parties restarted into different instances",
                json!({"instances": instances.iter().collect::<Vec<_>>()}),
            );
        }

        // Genesis dominance over every pre-recovery confirmation.
        for (p, entries) in &ctx.confirms {
            for (r, l) in entries.iter().filter(|(r, _)| *r < r_rec) {
                if !l.is_prefix_of(&l_rec) {
                    return Verdict::fail(
                        self.name(),
                        format!("{p}'s ledger confirmed at {r} is not a prefix of the new genesis"),
                        json!({
                            "party": p.to_string(),
                            "round": r,
                            "ledger": l.ids(),
                            "new_genesis": l_rec.ids(),
                        }),
                    );
                }
            }
        }

        // Bookmark mutual consistency before recovery.
        let mut pre: Vec<(Ledger, PartyId, Round)> = Vec::new();
        for (v, entries) in &ctx.bookmarks {
            for (r, l) in entries.iter().filter(|(r, _)| *r < r_rec) {
                if ctx.honest_at(*v, *r) {
                    pre.push((l.clone(), *v, *r));
                }
            }
        }
        if let Some([(la, pa, ra), (lb, pb, rb)]) = chain_violation(pre) {
            return Verdict::fail(
                self.name(),
                format!("bookmarks of {pa} (round {ra}) and {pb} (round {rb}) conflict"),
                json!({
                    "first": {"party": pa.to_string(), "round": ra, "ledger": la.ids()},
                    "second": {"party": pb.to_string(), "round": rb, "ledger": lb.ids()},
                }),
            );
        }

        // The new genesis extends the common prefix of the bookmarks held by
        // the honest survivors when they broadcast.
        let mut l_cp: Option<Ledger> = None;
        for i in ctx.v_new_indices() {
            let v = PartyId::validator(i);
            if !ctx.honest_at(v, r_rec) {
                continue;
            }
            let held = ctx
                .bookmarks
                .get(&v)
                .and_then(|es| es.iter().rev().find(|(r, _)| *r < r_rec))
                .map(|(_, l)| l.clone())
                .unwrap_or_default();
            l_cp = Some(match l_cp {
                None => held,
                Some(acc) => acc.common_prefix(&held),
            });
        }
        let l_cp = l_cp.unwrap_or_default();
        if !l_cp.is_prefix_of(&l_rec) {
            return Verdict::fail(
                self.name(),
                "new genesis does not extend the honest bookmark common prefix",
                json!({"common_prefix": l_cp.ids(), "new_genesis": l_rec.ids()}),
            );
        }
        Verdict::pass(
            self.name(),
            format!(
                "agreed new genesis of {} txs extends all {} pre-recovery confirmations",
                l_rec.len(),
                ctx.confirms.values().flatten().filter(|(r, _)| *r < r_rec).count()
            ),
        )
    }
}

struct BroadcastChecker;

/// Per-relay outcome list: (sender, delivered bookmark or nothing).
type Outcomes = Vec<(String, Option<Ledger>)>;

impl Checker for BroadcastChecker {
    fn name(&self) -> &'static str {
        "broadcast"
    }

    fn check(&self, t: &Trace) -> Verdict {
        let ctx = Ctx::new(t);
        let Some(r_rec) = ctx.r_rec() else {
            return Verdict::pass(self.name(), "no broadcast in this trace");
        };
        let completion = r_rec + t.meta.u_bc.expect("recovery trace has u_bc");

        let mut sent: BTreeMap<String, (Round, Ledger)> = BTreeMap::new();
        let mut delivered: BTreeMap<String, (Round, Outcomes)> = BTreeMap::new();
        for e in &t.events {
            match &e.body {
                EventBody::DsBroadcast { ledger } => {
                    sent.insert(e.party.clone(), (e.round, ledger_of(ledger)));
                }
                EventBody::DsDeliver { delivered: d } => {
                    let outcomes = d
                        .iter()
                        .map(|o| (o.sender.clone(), o.ledger.as_ref().map(|l| ledger_of(l))))
                        .collect();
                    delivered.insert(e.party.clone(), (e.round, outcomes));
                }
                _ => {}
            }
        }
        if delivered.is_empty() {
            return Verdict::fail(self.name(), "no broadcast outcomes recorded", json!({}));
        }
        for (s, (r, _)) in &sent {
            if *r != r_rec {
                return Verdict::fail(
                    self.name(),
                    format!("{s} broadcast its bookmark at round {r}, not at recovery"),
                    json!({"sender": s, "round": r}),
                );
            }
        }
        let mut reference: Option<(&String, &Outcomes)> = None;
        for (relay, (r, outcomes)) in &delivered {
            if *r != completion {
                return Verdict::fail(
                    self.name(),
                    format!(
                        "{relay} delivered at round {r}; the broadcast takes exactly {} rounds",
                        completion - r_rec
                    ),
                    json!({"relay": relay, "round": r, "expected": completion}),
                );
            }
            let senders: BTreeSet<&String> = outcomes.iter().map(|(s, _)| s).collect();
            if senders.len() != outcomes.len() {
                return Verdict::fail(
                    self.name(),
                    format!("{relay} delivered more than one value for a sender"),
                    json!({"relay": relay}),
                );
            }
            match &reference {
                None => reference = Some((relay, outcomes)),
                Some((first, expected)) => {
                    if expected != &outcomes {
                        return Verdict::fail(
                            self.name(),
                            format!("{relay} and {first} delivered different bookmark sets"),
                            json!({"relay": relay, "other": first}),
                        );
                    }
                }
            }
        }
        // Validity: honest senders' values delivered verbatim everywhere.
        let (_, reference) = reference.unwrap();
        for (s, (_, value)) in &sent {
            let got = reference.iter().find(|(sender, _)| sender == s).map(|(_, l)| l);
            if got != Some(&Some(value.clone())) {
                return Verdict::fail(
                    self.name(),
                    format!("honest sender {s}'s bookmark was not delivered faithfully"),
                    json!({"sender": s, "sent": value.ids()}),
                );
            }
        }
        Verdict::pass(
            self.name(),
            format!(
                "{} relays agree on {} sender outcomes at exactly r_rec+{}",
                delivered.len(),
                reference.len(),
                completion - r_rec
            ),
        )
    }
}

struct CertifiableSafetyChecker;

/// One internal-protocol instance reconstructed from the trace.
struct InstanceWindow {
    digest: String,
    genesis: Ledger,
    valset: Vec<usize>,
    start: Round,
    end: Round, // exclusive
}

impl CertifiableSafetyChecker {
    fn instance_windows(t: &Trace, ctx: &Ctx) -> Vec<InstanceWindow> {
        let horizon = t.meta.config.horizon;
        // The first crossing of the corruption threshold ends an instance's
        // honest-majority window for good.
        let crossing = |valset: &[usize], from: Round| -> Round {
            let mut rounds: BTreeSet<Round> = ctx.corrupt.values().copied().collect();
            rounds.insert(from);
            for r in rounds.into_iter().filter(|r| *r >= from) {
                let corrupted = valset
                    .iter()
                    .filter(|i| !ctx.honest_at(PartyId::validator(**i), r))
                    .count();
                if 2 * corrupted >= valset.len() {
                    return r;
                }
            }
            horizon + 1
        };
        let mut out = Vec::new();
        let valset0: Vec<usize> = (0..t.meta.config.n).collect();
        // The original instance digest appears in any of its witnesses; pick
        // it up from the first era-0 witness seen.
        let mut digest0 = None;
        for e in &t.events {
            if let EventBody::Send { payload: PayloadRepr::Witness { instance, .. }, .. }
            | EventBody::Inject { payload: PayloadRepr::Witness { instance, .. }, .. } = &e.body
            {
                if instance.era == 0 {
                    digest0 = Some(instance.digest.clone());
                    break;
                }
            }
        }
        out.push(InstanceWindow {
            digest: digest0.unwrap_or_default(),
            genesis: Ledger::empty(),
            valset: valset0.clone(),
            start: 0,
            end: crossing(&valset0, 0),
        });
        for e in &t.events {
            if let EventBody::Restart { instance, ledger, .. } = &e.body {
                if out.iter().any(|w| w.digest == *instance) {
                    continue;
                }
                let valset = ctx.v_new_indices();
                out.push(InstanceWindow {
                    digest: instance.clone(),
                    genesis: ledger_of(ledger),
                    valset: valset.clone(),
                    start: e.round,
                    end: crossing(&valset, e.round),
                });
            }
        }
        out
    }
}

impl Checker for CertifiableSafetyChecker {
    fn name(&self) -> &'static str {
        "certifiable_safety"
    }

    fn check(&self, t: &Trace) -> Verdict {
        let ctx = Ctx::new(t);
        let windows = Self::instance_windows(t, &ctx);

        // Honest validators' internal finalized ledgers, per instance: the
        // longest finality vote each sent within the window.
        let mut finalized: BTreeMap<(String, usize), Ledger> = BTreeMap::new();
        for e in &t.events {
            let EventBody::Send { payload: PayloadRepr::Vote { signer, instance, ledger }, .. } =
                &e.body
            else {
                continue;
            };
            let Ok(p) = signer.parse::<PartyId>() else { continue };
            let Some(w) = windows.iter().find(|w| w.digest == *instance) else { continue };
            if e.round < w.start || e.round >= w.end || !ctx.honest_at(p, e.round) {
                continue;
            }
            let l = ledger_of(ledger);
            let slot = finalized.entry((instance.clone(), p.index)).or_default();
            if l.len() > slot.len() {
                *slot = l;
            }
        }

        let mut accepted = 0usize;
        for e in &t.events {
            let (EventBody::Send { payload: PayloadRepr::Witness { instance, votes }, .. }
            | EventBody::Inject { payload: PayloadRepr::Witness { instance, votes }, .. }) = &e.body
            else {
                continue;
            };
            let Some(w) = windows.iter().find(|win| win.digest == instance.digest) else {
                continue;
            };
            if e.round < w.start || e.round >= w.end {
                continue; // outside the honest-majority window: out of scope
            }
            // Structural acceptance mirrors the consumer; traced signatures
            // verified at injection or came from honest signers.
            let mut signers = BTreeSet::new();
            let genesis = &w.genesis;
            let mut ok = votes.len() >= instance.quorum();
            let mut ledgers = Vec::new();
            for v in votes {
                let Ok(p) = v.signer.parse::<PartyId>() else {
                    ok = false;
                    break;
                };
                let l = ledger_of(&v.ledger);
                if !signers.insert(p) || !w.valset.contains(&p.index) || !genesis.is_prefix_of(&l) {
                    ok = false;
                    break;
                }
                ledgers.push(l);
            }
            if !ok {
                continue;
            }
            accepted += 1;
            let extracted = majority_prefix(&ledgers, w.valset.len());
            for i in &w.valset {
                if let Some(fin) = finalized.get(&(instance.digest.clone(), *i)) {
                    if !extracted.consistent_with(fin) {
                        return Verdict::fail(
                            self.name(),
                            format!(
                                "witness at round {} certifies a ledger conflicting with v{i}'s finalized ledger",
                                e.round
                            ),
                            json!({
                                "round": e.round,
                                "witness_ledger": extracted.ids(),
                                "validator": i,
                                "finalized": fin.ids(),
                            }),
                        );
                    }
                }
            }
        }
        Verdict::pass(
            self.name(),
            format!("{accepted} in-window witnesses consistent with honest finalized ledgers"),
        )
    }
}

struct NetworkChecker;

impl Checker for NetworkChecker {
    fn name(&self) -> &'static str {
        "network"
    }

    fn check(&self, t: &Trace) -> Verdict {
        let ctx = Ctx::new(t);
        let delta = t.meta.config.delta;
        let horizon = t.meta.config.horizon;

        let mut holds: BTreeMap<&String, BTreeMap<PartyId, Round>> = BTreeMap::new();
        for e in &t.events {
            let digest = match &e.body {
                EventBody::Send { digest, .. } | EventBody::Deliver { digest, .. } => digest,
                _ => continue,
            };
            if let Some(p) = e.party_id() {
                holds.entry(digest).or_default().entry(p).or_insert(e.round);
            }
        }

        let parties: Vec<(PartyId, Round, Option<Round>)> = (0..t.meta.config.n)
            .map(|i| (PartyId::validator(i), 0, None))
            .chain(
                t.meta
                    .config
                    .clients
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (PartyId::client(k), c.wake, c.sleep)),
            )
            .collect();

        let mut checked = 0usize;
        for (digest, per_party) in &holds {
            let t0 = per_party
                .iter()
                .filter(|(p, r)| ctx.honest_at(**p, **r))
                .map(|(_, r)| *r)
                .min();
            let Some(t0) = t0 else { continue }; // never honestly held
            for (p, wake, sleep) in &parties {
                let deadline = t0.max(*wake) + delta;
                if deadline > horizon {
                    continue;
                }
                if ctx.corrupt.get(p).is_some_and(|c| *c <= deadline) {
                    continue;
                }
                if sleep.is_some_and(|s| s <= deadline) {
                    continue;
                }
                if p.is_validator() && !ctx.validator_alive(p.index, deadline) {
                    continue;
                }
                checked += 1;
                if per_party.get(p).is_none_or(|r| *r > deadline) {
                    return Verdict::fail(
                        self.name(),
                        format!("message first held honestly at {t0} was not at {p} by {deadline}"),
                        json!({
                            "digest": digest,
                            "first_honest_hold": t0,
                            "party": p.to_string(),
                            "deadline": deadline,
                            "held_at": per_party.get(p),
                        }),
                    );
                }
            }
        }
        Verdict::pass(self.name(), format!("{checked} delivery obligations met within delta"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ClientEntry, ScenarioConfig};
    use crate::internal::InternalSpec;
    use crate::trace::{TraceEvent, TraceMeta, TRACE_VERSION};

    fn mk_trace(events: Vec<TraceEvent>) -> Trace {
        Trace {
            meta: TraceMeta {
                version: TRACE_VERSION,
                u_pi: 5,
                u_bc: None,
                quorum: 3,
                validator_wait: 1,
                client_wait: 3,
                config: ScenarioConfig {
                    name: "synthetic".into(),
                    n: 4,
                    delta: 1,
                    horizon: 50,
                    protocol: ProtocolMode::Recovery,
                    internal: InternalSpec::SimpleSync,
                    validator_wait_mult: None,
                    client_wait_mult: None,
                    client_gossip: true,
                    r_maj: None,
                    r_rec: None,
                    kill: vec![],
                    corruptions: vec![],
                    clients: vec![
                        ClientEntry { wake: 0, sleep: None, corrupt_round: None },
                        ClientEntry { wake: 0, sleep: None, corrupt_round: None },
                    ],
                    txs: vec![],
                    adversary: Default::default(),
                    seed: 0,
                },
            },
            events,
        }
    }

    fn ev(round: Round, party: &str, body: EventBody) -> TraceEvent {
        TraceEvent { round, party: party.into(), body }
    }

    #[test]
    fn safety_catches_forked_confirmations() {
        let t = mk_trace(vec![
            ev(5, "c0", EventBody::Confirm { ledger: vec!["t1".into(), "t2".into()] }),
            ev(6, "c1", EventBody::Confirm { ledger: vec!["t1".into(), "t3".into()] }),
        ]);
        let v = SafetyChecker.check(&t);
        assert!(!v.pass, "{}", v.detail);

        let ok = mk_trace(vec![
            ev(5, "c0", EventBody::Confirm { ledger: vec!["t1".into()] }),
            ev(6, "c1", EventBody::Confirm { ledger: vec!["t1".into(), "t2".into()] }),
        ]);
        assert!(SafetyChecker.check(&ok).pass);
        // Vacuous pass on an empty trace.
        assert!(SafetyChecker.check(&mk_trace(vec![])).pass);
    }

    #[test]
    fn monotonicity_catches_shrinking_confirmations() {
        let t = mk_trace(vec![
            ev(5, "c0", EventBody::Confirm { ledger: vec!["t1".into(), "t2".into()] }),
            ev(7, "c0", EventBody::Confirm { ledger: vec!["t1".into(), "t3".into(), "t4".into()] }),
        ]);
        assert!(!MonotonicityChecker.check(&t).pass);
    }

    #[test]
    fn follow_the_leader_catches_rushed_confirmation() {
        let t = mk_trace(vec![
            ev(4, "v0", EventBody::Bookmark { ledger: vec!["t1".into()] }),
            ev(5, "c0", EventBody::Confirm { ledger: vec!["t1".into(), "t2".into()] }),
        ]);
        let v = FollowTheLeaderChecker.check(&t);
        assert!(!v.pass, "{}", v.detail);

        let ok = mk_trace(vec![
            ev(4, "v0", EventBody::Bookmark { ledger: vec!["t1".into(), "t2".into()] }),
            ev(4, "v1", EventBody::Bookmark { ledger: vec!["t1".into(), "t2".into()] }),
            ev(4, "v2", EventBody::Bookmark { ledger: vec!["t1".into(), "t2".into()] }),
            ev(4, "v3", EventBody::Bookmark { ledger: vec!["t1".into(), "t2".into()] }),
            ev(5, "c0", EventBody::Confirm { ledger: vec!["t1".into(), "t2".into()] }),
        ]);
        assert!(FollowTheLeaderChecker.check(&ok).pass);
    }

    #[test]
    fn liveness_catches_missing_confirmation() {
        let mut t = mk_trace(vec![
            ev(0, "v0", EventBody::TxInput { id: "t1".into() }),
            ev(0, "v1", EventBody::TxInput { id: "t1".into() }),
            ev(0, "v2", EventBody::TxInput { id: "t1".into() }),
            ev(0, "v3", EventBody::TxInput { id: "t1".into() }),
        ]);
        t.meta.config.horizon = 30;
        let v = LivenessChecker.check(&t);
        assert!(!v.pass, "{}", v.detail);
        // Confirmed in time at both clients: u = 5 + 3 = 8, first deadline 9.
        t.events.push(ev(7, "c0", EventBody::Confirm { ledger: vec!["t1".into()] }));
        t.events.push(ev(8, "c1", EventBody::Confirm { ledger: vec!["t1".into()] }));
        let v = LivenessChecker.check(&t);
        assert!(v.pass, "{}", v.detail);
        // Late at c1: deadline exceeded.
        t.events.pop();
        t.events.push(ev(10, "c1", EventBody::Confirm { ledger: vec!["t1".into()] }));
        assert!(!LivenessChecker.check(&t).pass);
    }

    #[test]
    fn manifest_covers_exactly_the_registered_checkers() {
        let names: BTreeSet<&str> = checker_names().into_iter().collect();
        let mapped: BTreeSet<&str> = PROPERTY_MANIFEST.iter().map(|(_, c)| *c).collect();
        assert_eq!(names, mapped, "every checker carries at least one property and vice versa");
        assert!(by_name("safety").is_some());
        assert!(by_name("nonsense").is_none());
    }
}
