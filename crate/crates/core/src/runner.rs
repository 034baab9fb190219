//! Deterministic scenario execution.
//!
//! Round structure, fixed and documented: environment events (corruptions,
//! kills, the recovery announcement), then the adversary (a rushing
//! adversary: it acts before anything is delivered), then deliveries, then
//! validator steps, then client steps, then timers (validator bookmarks
//! before client confirmations). Within each phase parties act in index
//! order. All state is iterated in deterministic order and the only
//! randomness is the seeded strategy stream, so a config replays to a
//! byte-identical trace.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{self, AdversaryView, Strategy};
use crate::broadcast;
use crate::config::{ConfigError, ProtocolMode, Resolved, ScenarioConfig, TxRecipients};
use crate::crypto::{ContentDigest, Encode, KeyStore};
use crate::internal::{
    build_internal, FinalityVote, InstanceEnv, InstanceId, InternalProtocol, InternalSpec,
    WitnessError,
};
use crate::ledger::{Ledger, Round, Transaction, TxId};
use crate::message::Payload;
use crate::net::{Network, Scope};
use crate::party::{PartyId, PartyKind};
use crate::recovery::{ClientGadget, ValidatorGadget, ValidatorPhase};
use crate::trace::{DsOutcome, EventBody, PayloadRepr, Trace, TraceEvent, TraceMeta, TRACE_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario contract violated: {0}")]
    Contract(String),
}

/// Runs a scenario to completion and returns its trace.
pub fn run(config: &ScenarioConfig) -> Result<Trace, RunError> {
    let resolved = config.validate()?;
    let u_pi = resolve_u_pi(config);
    let (trace, _) = run_resolved(config, resolved, u_pi)?;
    Ok(trace)
}

/// The internal-protocol latency used by the liveness bounds: declared for
/// the oracle, measured by calibration for the concrete implementation.
pub fn resolve_u_pi(config: &ScenarioConfig) -> u64 {
    match &config.internal {
        InternalSpec::ScriptedOracle { u_pi } => *u_pi,
        InternalSpec::SimpleSync => measured_u_pi(config.n, config.delta),
    }
}

/// Worst-case rounds from "every validator holds the transaction" to "every
/// always-awake client can produce a witness containing it", measured over an
/// honest calibration run that sweeps all epoch alignments: startup plus a
/// full steady-state epoch of injection offsets.
pub fn measured_u_pi(n: usize, delta: u64) -> u64 {
    static CACHE: OnceLock<Mutex<BTreeMap<(usize, u64), u64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&(n, delta)) {
        return *v;
    }
    let mut txs = Vec::new();
    for r in 0..6 * delta {
        txs.push(crate::config::TxEntry { id: format!("cal-{r}"), round: r, to: TxRecipients::default() });
    }
    for r in 10 * delta..12 * delta {
        txs.push(crate::config::TxEntry { id: format!("cal-{r}"), round: r, to: TxRecipients::default() });
    }
    let config = ScenarioConfig {
        name: "calibration".into(),
        n,
        delta,
        horizon: 26 * delta + 2,
        protocol: ProtocolMode::Freezing,
        internal: InternalSpec::SimpleSync,
        validator_wait_mult: None,
        client_wait_mult: None,
        client_gossip: true,
        r_maj: None,
        r_rec: None,
        kill: vec![],
        corruptions: vec![],
        clients: vec![
            crate::config::ClientEntry { wake: 0, sleep: None, corrupt_round: None },
            crate::config::ClientEntry { wake: 0, sleep: None, corrupt_round: None },
        ],
        txs,
        adversary: Default::default(),
        seed: 0,
    };
    let resolved = config.validate().expect("calibration config");
    let (_, world) = run_resolved(&config, resolved, 0).expect("calibration run");
    let mut worst = 0;
    for tx in &config.txs {
        for c in 0..config.clients.len() {
            let seen = world
                .candidate_first
                .get(&(PartyId::client(c), tx.id.clone()))
                .unwrap_or_else(|| panic!("calibration: {} never reached c{c}", tx.id));
            worst = worst.max(seen - tx.round);
        }
    }
    cache.lock().unwrap().insert((n, delta), worst);
    worst
}

fn run_resolved(
    config: &ScenarioConfig,
    resolved: Resolved,
    u_pi: u64,
) -> Result<(Trace, World<'_>), RunError> {
    let mut world = World::new(config, resolved, u_pi);
    let mut strategy = adversary::build(&config.adversary.name, &config.adversary.params)
        .expect("strategy validated with config");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for r in 0..=config.horizon {
        world.round(r, strategy.as_mut(), &mut rng)?;
    }
    let trace = world.trace();
    Ok((trace, world))
}

struct InboxItem {
    prio: u8,
    seq: u64,
    payload: Arc<Payload>,
    digest: ContentDigest,
    targeted: bool,
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    res: Resolved,
    u_pi: u64,
    delta: u64,
    n: usize,
    keystore: KeyStore,
    net: Network,
    events: Vec<TraceEvent>,
    validators: BTreeMap<usize, ValidatorGadget>,
    clients: BTreeMap<usize, ClientGadget>,
    internal: Box<dyn InternalProtocol>,
    fin_len: BTreeMap<PartyId, usize>,
    corrupt_at: BTreeMap<PartyId, Round>,
    corrupted_keys: BTreeMap<PartyId, crate::crypto::KeyHandle>,
    seen: BTreeMap<PartyId, BTreeSet<ContentDigest>>,
    inboxes: BTreeMap<PartyId, Vec<InboxItem>>,
    observed: Vec<(Round, PartyId, Arc<Payload>)>,
    txs_by_round: BTreeMap<Round, Vec<(usize, Transaction)>>,
    /// First round each (client, tx) pair had the tx inside a witness
    /// candidate; drives latency calibration.
    candidate_first: BTreeMap<(PartyId, TxId), Round>,
    inbox_seq: u64,
    restart_batch: Vec<(usize, InstanceId, Ledger, Vec<Transaction>)>,
}

impl<'a> World<'a> {
    fn new(cfg: &'a ScenarioConfig, res: Resolved, u_pi: u64) -> Self {
        let n = cfg.n;
        let keystore = KeyStore::new(n);
        let client_sched: Vec<(Round, Option<Round>)> =
            cfg.clients.iter().map(|c| (c.wake, c.sleep)).collect();
        let kill_set: BTreeSet<usize> = cfg.kill.iter().copied().collect();
        let net = Network::new(cfg.delta, n, client_sched, kill_set, cfg.r_rec);

        let instance = InstanceId::original(n);
        let keys: BTreeMap<PartyId, crate::crypto::KeyHandle> =
            (0..n).map(|i| (PartyId::validator(i), keystore.handle(i))).collect();
        let internal = build_internal(&cfg.internal, instance.clone(), keys, cfg.delta);

        let bookmarks = cfg.protocol == ProtocolMode::Recovery;
        let validators: BTreeMap<usize, ValidatorGadget> = (0..n)
            .map(|i| {
                let g = ValidatorGadget::new(
                    PartyId::validator(i),
                    keystore.handle(i),
                    instance.clone(),
                    res.validator_wait,
                    bookmarks,
                );
                (i, g)
            })
            .collect();
        let clients: BTreeMap<usize, ClientGadget> = (0..cfg.clients.len())
            .map(|k| (k, ClientGadget::new(PartyId::client(k), instance.clone(), res.client_wait)))
            .collect();
        let fin_len = (0..n).map(|i| (PartyId::validator(i), 0usize)).collect();

        let mut txs_by_round: BTreeMap<Round, Vec<(usize, Transaction)>> = BTreeMap::new();
        for entry in &cfg.txs {
            let recipients: Vec<usize> = match &entry.to {
                TxRecipients::All(_) => (0..n).collect(),
                TxRecipients::Some(v) => {
                    let mut v = v.clone();
                    v.sort();
                    v.dedup();
                    v
                }
            };
            let tx = Transaction::new(entry.id.clone(), entry.round);
            for i in recipients {
                txs_by_round.entry(entry.round).or_default().push((i, tx.clone()));
            }
        }

        World {
            cfg,
            res,
            u_pi,
            delta: cfg.delta,
            n,
            keystore,
            net,
            events: Vec::new(),
            validators,
            clients,
            internal,
            fin_len,
            corrupt_at: BTreeMap::new(),
            corrupted_keys: BTreeMap::new(),
            seen: BTreeMap::new(),
            inboxes: BTreeMap::new(),
            observed: Vec::new(),
            txs_by_round,
            candidate_first: BTreeMap::new(),
            inbox_seq: 0,
            restart_batch: Vec::new(),
        }
    }

    fn trace(&self) -> Trace {
        Trace {
            meta: TraceMeta {
                version: TRACE_VERSION,
                u_pi: self.u_pi,
                u_bc: self.res.u_bc,
                quorum: self.res.quorum,
                validator_wait: self.res.validator_wait,
                client_wait: self.res.client_wait,
                config: self.cfg.clone(),
            },
            events: self.events.clone(),
        }
    }

    fn emit(&mut self, round: Round, party: PartyId, body: EventBody) {
        self.events.push(TraceEvent { round, party: party.to_string(), body });
    }

    fn honest(&self, p: PartyId, round: Round) -> bool {
        self.corrupt_at.get(&p).is_none_or(|c| round < *c)
    }

    fn present(&self, p: PartyId, round: Round) -> bool {
        match p.kind {
            PartyKind::Validator => self.net.validator_alive(p.index, round),
            PartyKind::Client => self.net.client_awake(p.index, round),
        }
    }

    fn honest_alive_in_valset(&self, round: Round) -> BTreeSet<PartyId> {
        self.internal
            .instance()
            .valset
            .members()
            .iter()
            .copied()
            .filter(|p| self.present(*p, round) && self.honest(*p, round))
            .collect()
    }

    fn push_inbox(&mut self, to: PartyId, payload: Arc<Payload>, prio: u8, targeted: bool) {
        let digest = payload.digest();
        let seq = self.inbox_seq;
        self.inbox_seq += 1;
        self.inboxes
            .entry(to)
            .or_default()
            .push(InboxItem { prio, seq, payload, digest, targeted });
    }

    fn broadcast_from(&mut self, from: PartyId, payload: Payload, round: Round) {
        debug_assert!(self.present(from, round) && self.honest(from, round));
        let payload = Arc::new(payload);
        let digest = payload.digest();
        self.seen.entry(from).or_default().insert(digest);
        let msg = self.net.broadcast(from, Arc::clone(&payload), round);
        self.observed.push((round, from, Arc::clone(&payload)));
        let repr = PayloadRepr::of(&payload);
        self.emit(round, from, EventBody::Send { msg, digest: digest.short(), payload: repr });
    }

    fn round(
        &mut self,
        r: Round,
        strategy: &mut dyn Strategy,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), RunError> {
        self.env_phase(r);
        self.adversary_phase(r, strategy, rng);
        self.delivery_phase(r);
        self.validator_phase(r)?;
        self.client_phase(r)?;
        self.timer_phase(r);
        self.inboxes.clear();
        Ok(())
    }

    fn env_phase(&mut self, r: Round) {
        for c in &self.cfg.corruptions.clone() {
            if c.round == r {
                let p = PartyId::validator(c.validator);
                self.corrupt_at.insert(p, r);
                self.corrupted_keys.insert(p, self.keystore.handle(c.validator));
                self.emit(r, p, EventBody::Corrupt);
            }
        }
        for (k, entry) in self.cfg.clients.iter().enumerate() {
            if entry.corrupt_round == Some(r) {
                let p = PartyId::client(k);
                self.corrupt_at.insert(p, r);
                self.emit(r, p, EventBody::Corrupt);
            }
        }
        let Some(r_rec) = self.cfg.r_rec else { return };
        let v_new = self.res.v_new.clone().expect("validated");
        let valset_indices: Vec<usize> = v_new.members().iter().map(|p| p.index).collect();
        if r == r_rec {
            for k in &self.cfg.kill.clone() {
                self.emit(r, PartyId::validator(*k), EventBody::Kill);
            }
            let payload = Arc::new(Payload::Recover { valset: v_new.clone() });
            let recipients: Vec<PartyId> = (0..self.n)
                .map(PartyId::validator)
                .chain((0..self.cfg.clients.len()).map(PartyId::client))
                .filter(|p| self.present(*p, r))
                .collect();
            for p in recipients {
                self.emit(r, p, EventBody::Recover { valset: valset_indices.clone() });
                if self.honest(p, r) {
                    self.push_inbox(p, Arc::clone(&payload), 0, false);
                }
            }
        } else if r > r_rec {
            let wakers: Vec<usize> = self
                .cfg
                .clients
                .iter()
                .enumerate()
                .filter(|(_, c)| c.wake == r)
                .map(|(k, _)| k)
                .collect();
            if !wakers.is_empty() {
                let payload = Arc::new(Payload::Recover { valset: v_new });
                for k in wakers {
                    let p = PartyId::client(k);
                    self.emit(r, p, EventBody::Recover { valset: valset_indices.clone() });
                    if self.honest(p, r) {
                        self.push_inbox(p, Arc::clone(&payload), 0, false);
                    }
                }
            }
        }
    }

    fn adversary_phase(&mut self, r: Round, strategy: &mut dyn Strategy, rng: &mut ChaCha8Rng) {
        let actions = {
            let in_flight = self.net.in_flight();
            let corrupted_bookmarks = self
                .corrupted_keys
                .keys()
                .filter(|p| p.is_validator())
                .filter_map(|p| self.validators.get(&p.index).map(|g| (*p, g.bookmarked())))
                .collect();
            let honest_awake_clients = (0..self.cfg.clients.len())
                .map(PartyId::client)
                .filter(|p| self.present(*p, r) && self.honest(*p, r))
                .collect();
            let honest_clients = (0..self.cfg.clients.len())
                .map(PartyId::client)
                .filter(|p| {
                    self.honest(*p, r)
                        && self.cfg.clients[p.index].sleep.is_none_or(|s| r < s)
                })
                .collect();
            let view = AdversaryView {
                round: r,
                delta: self.delta,
                n: self.n,
                quorum: self.internal.instance().quorum(),
                r_maj: self.cfg.r_maj,
                r_rec: self.cfg.r_rec,
                v_new: self.res.v_new.as_ref(),
                instance: self.internal.instance(),
                corrupted_keys: &self.corrupted_keys,
                corrupted_bookmarks,
                observed: &self.observed,
                in_flight: &in_flight,
                honest_awake_clients,
                honest_clients,
            };
            strategy.step(&view, rng)
        };
        for inj in actions.injections {
            if self.honest(inj.sender, r) {
                eprintln!("adversary: injection from uncorrupted {} dropped", inj.sender);
                continue;
            }
            let payload = Arc::new(inj.payload);
            match self.net.inject(inj.sender, &inj.targets, Arc::clone(&payload), r) {
                Ok(msg) => {
                    self.observed.push((r, inj.sender, Arc::clone(&payload)));
                    let to: Vec<String> = inj.targets.iter().map(|(p, _)| p.to_string()).collect();
                    let repr = PayloadRepr::of(&payload);
                    self.emit(
                        r,
                        inj.sender,
                        EventBody::Inject { msg, digest: payload.digest().short(), to, payload: repr },
                    );
                }
                Err(e) => eprintln!("adversary: injection rejected: {e}"),
            }
        }
        for d in actions.delays {
            // Out-of-bounds assignments are simply not applied.
            let _ = self.net.reassign(d.msg, d.recipient, d.round, r);
        }
    }

    fn delivery_phase(&mut self, r: Round) {
        for d in self.net.due(r) {
            self.emit(
                r,
                d.recipient,
                EventBody::Deliver { msg: d.msg, from: d.sender.to_string(), digest: d.digest.short() },
            );
            if self.honest(d.recipient, r) {
                let targeted = d.scope == Scope::Targeted;
                let seq = self.inbox_seq;
                self.inbox_seq += 1;
                self.inboxes.entry(d.recipient).or_default().push(InboxItem {
                    prio: 1,
                    seq,
                    payload: d.payload,
                    digest: d.digest,
                    targeted,
                });
            }
        }
    }

    fn validator_sees_tx(&mut self, i: usize, tx: &Transaction, r: Round) {
        let vid = PartyId::validator(i);
        if !self.validators.get_mut(&i).unwrap().observe_tx(tx) {
            return;
        }
        if self.internal.instance().valset.contains(vid) {
            self.internal.input_tx(vid, tx, r);
        }
        let payload = Payload::Tx(tx.clone());
        let digest = payload.digest();
        if !self.seen.entry(vid).or_default().contains(&digest) {
            self.broadcast_from(vid, payload, r);
        }
    }

    fn validator_phase(&mut self, r: Round) -> Result<(), RunError> {
        if let Some(list) = self.txs_by_round.get(&r).cloned() {
            for (i, tx) in list {
                let vid = PartyId::validator(i);
                if self.present(vid, r) && self.honest(vid, r) {
                    self.emit(r, vid, EventBody::TxInput { id: tx.id.clone() });
                    self.validator_sees_tx(i, &tx, r);
                }
            }
        }
        let env_set = self.honest_alive_in_valset(r);
        self.internal.begin_round(r, &InstanceEnv { honest_alive: &env_set });

        for i in 0..self.n {
            let vid = PartyId::validator(i);
            if !self.present(vid, r) || !self.honest(vid, r) {
                continue;
            }
            let mut items = self.inboxes.remove(&vid).unwrap_or_default();
            items.sort_by_key(|it| (it.prio, it.seq));
            for item in items {
                self.validator_handle_item(i, item, r)?;
            }
            if self.internal.instance().valset.contains(vid) {
                let mut out = Vec::new();
                self.internal.step(vid, r, &mut out);
                for m in out {
                    self.broadcast_from(vid, Payload::Internal(m), r);
                }
                self.check_finality_growth(i, r);
            }
            if let Some((w, _)) = self.validators.get_mut(&i).unwrap().self_witness(r) {
                let payload = Payload::Witness(w);
                // Identical witnesses already circulating need no extra copy.
                if !self.seen.entry(vid).or_default().contains(&payload.digest()) {
                    self.broadcast_from(vid, payload, r);
                }
            }
            if self.res.restart_round == Some(r)
                && self.validators[&i].phase == ValidatorPhase::Broadcasting
            {
                self.validator_finish_ds(i, r);
            }
        }
        if !self.restart_batch.is_empty() {
            self.apply_restart(r)?;
        }
        Ok(())
    }

    fn validator_handle_item(&mut self, i: usize, item: InboxItem, r: Round) -> Result<(), RunError> {
        let vid = PartyId::validator(i);
        if !self.seen.entry(vid).or_default().insert(item.digest) {
            return Ok(());
        }
        if item.targeted {
            self.broadcast_from(vid, (*item.payload).clone(), r);
        }
        match &*item.payload {
            Payload::Recover { valset } => {
                if self.cfg.r_rec != Some(r) {
                    return Err(RunError::Contract(format!("recover announcement at round {r}")));
                }
                let chain = self.validators.get_mut(&i).unwrap().on_recover(valset.clone());
                self.emit(r, vid, EventBody::DsBroadcast { ledger: chain.value.ids().to_vec() });
                self.broadcast_from(vid, Payload::Bookmark(chain), r);
            }
            Payload::Tx(tx) => self.validator_sees_tx(i, &tx.clone(), r),
            Payload::Vote(v) => {
                self.validators.get_mut(&i).unwrap().on_vote(v);
            }
            Payload::Witness(w) => {
                let outcome = {
                    let g = self.validators.get_mut(&i).unwrap();
                    g.bookmark.is_some().then(|| g.on_witness(w, r))
                };
                if let Some(Err(e)) = outcome {
                    self.emit_witness_reject(vid, item.digest, e, r);
                }
            }
            Payload::Internal(m) => {
                if self.internal.instance().valset.contains(vid) {
                    let mut out = Vec::new();
                    self.internal.handle(vid, r, m, &mut out);
                    for m in out {
                        self.broadcast_from(vid, Payload::Internal(m), r);
                    }
                }
            }
            Payload::Bookmark(chain) => {
                let g = self.validators.get_mut(&i).unwrap();
                if g.phase == ValidatorPhase::Broadcasting {
                    let r_rec = self.cfg.r_rec.expect("broadcasting implies r_rec");
                    let k = broadcast::round_index(r.saturating_sub(r_rec), self.delta);
                    let relay = g.on_chain(chain, k);
                    if let Some(relay) = relay {
                        self.broadcast_from(vid, Payload::Bookmark(relay), r);
                    }
                }
            }
            Payload::Genesis(_) => {} // validators compute the genesis themselves
        }
        Ok(())
    }

    fn emit_witness_reject(&mut self, p: PartyId, digest: ContentDigest, e: WitnessError, r: Round) {
        self.emit(
            r,
            p,
            EventBody::WitnessReject { digest: digest.short(), reason: e.code().into() },
        );
    }

    fn check_finality_growth(&mut self, i: usize, r: Round) {
        let vid = PartyId::validator(i);
        let fin = self.internal.finalized(vid);
        if fin.len() <= self.fin_len[&vid] {
            return;
        }
        let ledger = fin.clone();
        self.fin_len.insert(vid, ledger.len());
        let vote = FinalityVote::sign(
            &self.keystore.handle(i),
            self.internal.instance().digest(),
            ledger,
        );
        self.validators.get_mut(&i).unwrap().on_vote(&vote);
        self.broadcast_from(vid, Payload::Vote(vote), r);
    }

    fn validator_finish_ds(&mut self, i: usize, r: Round) {
        let vid = PartyId::validator(i);
        let (delivered, l_rec) = self.validators[&i].ds_finalize();
        let outcomes: Vec<DsOutcome> = delivered
            .iter()
            .map(|(s, l)| DsOutcome {
                sender: s.to_string(),
                ledger: l.as_ref().map(|l| l.ids().to_vec()),
            })
            .collect();
        self.emit(r, vid, EventBody::DsDeliver { delivered: outcomes });
        self.emit(r, vid, EventBody::NewGenesis { ledger: l_rec.ids().to_vec() });
        let instance = InstanceId {
            era: 1,
            genesis: l_rec.clone(),
            valset: self.res.v_new.clone().expect("validated"),
            start_round: r,
        };
        let (gvote, carry) = self.validators.get_mut(&i).unwrap().restart(instance.clone());
        self.emit(
            r,
            vid,
            EventBody::GenesisVote {
                instance: instance.digest().short(),
                ledger: l_rec.ids().to_vec(),
            },
        );
        self.broadcast_from(vid, Payload::Genesis(gvote), r);
        self.emit(
            r,
            vid,
            EventBody::Restart {
                instance: instance.digest().short(),
                ledger: l_rec.ids().to_vec(),
                carried: carry.len(),
            },
        );
        self.restart_batch.push((i, instance, l_rec, carry));
    }

    fn apply_restart(&mut self, r: Round) -> Result<(), RunError> {
        let batch = std::mem::take(&mut self.restart_batch);
        let (_, instance, _, _) = &batch[0];
        if batch.iter().any(|(_, inst, _, _)| inst != instance) {
            return Err(RunError::Contract(
                "honest validators computed different new geneses".into(),
            ));
        }
        let keys: BTreeMap<PartyId, crate::crypto::KeyHandle> = instance
            .valset
            .members()
            .iter()
            .map(|p| (*p, self.keystore.handle(p.index)))
            .collect();
        self.internal = build_internal(&self.cfg.internal, instance.clone(), keys, self.delta);
        let env_set = self.honest_alive_in_valset(r);
        self.internal.begin_round(r, &InstanceEnv { honest_alive: &env_set });
        for (i, instance, l_rec, carry) in &batch {
            let vid = PartyId::validator(*i);
            self.fin_len.insert(vid, l_rec.len());
            for tx in carry {
                self.internal.input_tx(vid, tx, r);
            }
            let _ = instance;
        }
        for (i, _, _, _) in &batch {
            let vid = PartyId::validator(*i);
            let mut out = Vec::new();
            self.internal.step(vid, r, &mut out);
            for m in out {
                self.broadcast_from(vid, Payload::Internal(m), r);
            }
            self.check_finality_growth(*i, r);
        }
        Ok(())
    }

    fn record_candidates(&mut self, p: PartyId, ledger: &Ledger, r: Round) {
        for id in ledger.ids() {
            self.candidate_first.entry((p, id.clone())).or_insert(r);
        }
    }

    fn client_phase(&mut self, r: Round) -> Result<(), RunError> {
        for k in 0..self.cfg.clients.len() {
            let cid = PartyId::client(k);
            if !self.present(cid, r) || !self.honest(cid, r) {
                continue;
            }
            let mut items = self.inboxes.remove(&cid).unwrap_or_default();
            items.sort_by_key(|it| (it.prio, it.seq));
            for item in items {
                self.client_handle_item(k, item, r)?;
            }
            if let Some((w, ledger)) = self.clients.get_mut(&k).unwrap().self_witness(r) {
                self.record_candidates(cid, &ledger, r);
                let payload = Payload::Witness(w);
                if !self.seen.entry(cid).or_default().contains(&payload.digest()) {
                    self.broadcast_from(cid, payload, r);
                }
            }
        }
        Ok(())
    }

    fn client_handle_item(&mut self, k: usize, item: InboxItem, r: Round) -> Result<(), RunError> {
        let cid = PartyId::client(k);
        if !self.seen.entry(cid).or_default().insert(item.digest) {
            return Ok(());
        }
        if item.targeted && self.cfg.client_gossip {
            self.broadcast_from(cid, (*item.payload).clone(), r);
        }
        match &*item.payload {
            Payload::Recover { valset } => {
                if self.cfg.r_rec.is_none() {
                    return Err(RunError::Contract(format!("recover announcement at round {r}")));
                }
                if self.clients.get_mut(&k).unwrap().on_recover(valset.clone()) {
                    self.emit(r, cid, EventBody::Freeze);
                }
            }
            Payload::Vote(v) => self.clients.get_mut(&k).unwrap().on_vote(v),
            Payload::Witness(w) => {
                let outcome = self.clients.get_mut(&k).unwrap().on_witness(w, r);
                match outcome {
                    Ok(ledger) => self.record_candidates(cid, &ledger, r),
                    Err(e) => self.emit_witness_reject(cid, item.digest, e, r),
                }
            }
            Payload::Genesis(g) => {
                let (prev, outcome) = {
                    let gadget = self.clients.get_mut(&k).unwrap();
                    let prev = gadget.confirmed().clone();
                    gadget.on_genesis_vote(g);
                    (prev, gadget.try_restart(r))
                };
                match outcome {
                    Ok(Some((instance, l_rec))) => {
                        self.finish_client_restart(cid, &instance, &l_rec, &prev, r);
                    }
                    Ok(None) => {}
                    Err(e) => return Err(RunError::Contract(e.to_string())),
                }
            }
            Payload::Tx(_) | Payload::Internal(_) | Payload::Bookmark(_) => {}
        }
        Ok(())
    }

    fn finish_client_restart(
        &mut self,
        cid: PartyId,
        instance: &InstanceId,
        l_rec: &Ledger,
        prev: &Ledger,
        r: Round,
    ) {
        self.emit(
            r,
            cid,
            EventBody::Restart {
                instance: instance.digest().short(),
                ledger: l_rec.ids().to_vec(),
                carried: 0,
            },
        );
        if l_rec != prev {
            self.emit(r, cid, EventBody::Confirm { ledger: l_rec.ids().to_vec() });
        }
    }

    fn timer_phase(&mut self, r: Round) {
        for i in 0..self.n {
            let vid = PartyId::validator(i);
            if !self.present(vid, r) || !self.honest(vid, r) {
                continue;
            }
            for ledger in self.validators.get_mut(&i).unwrap().fire_timers(r) {
                self.emit(r, vid, EventBody::Bookmark { ledger: ledger.ids().to_vec() });
            }
        }
        for k in 0..self.cfg.clients.len() {
            let cid = PartyId::client(k);
            if !self.present(cid, r) || !self.honest(cid, r) {
                continue;
            }
            for ledger in self.clients.get_mut(&k).unwrap().fire_timers(r) {
                self.emit(r, cid, EventBody::Confirm { ledger: ledger.ids().to_vec() });
            }
        }
    }
}
