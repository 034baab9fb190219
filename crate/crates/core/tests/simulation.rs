//! End-to-end runs through the full round loop and checker suite.

use thaw_core::checkers;
use thaw_core::config::{
    AdversarySpec, ClientEntry, ProtocolMode, ScenarioConfig, TxEntry,
    TxRecipients,
};
use thaw_core::demos;
use thaw_core::internal::InternalSpec;
use thaw_core::runner;
use thaw_core::trace::EventBody;

fn honest_config(internal: InternalSpec, n: usize, delta: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "honest".into(),
        n,
        delta,
        horizon: 60 * delta,
        protocol: ProtocolMode::Recovery,
        internal,
        validator_wait_mult: None,
        client_wait_mult: None,
        client_gossip: true,
        r_maj: None,
        r_rec: None,
        kill: vec![],
        corruptions: vec![],
        clients: vec![
            ClientEntry { wake: 0, sleep: None, corrupt_round: None },
            ClientEntry { wake: 3, sleep: None, corrupt_round: None },
        ],
        txs: vec![
            TxEntry { id: "t1".into(), round: 2, to: TxRecipients::default() },
            TxEntry { id: "t2".into(), round: 9, to: TxRecipients::default() },
            TxEntry { id: "t3".into(), round: 17, to: TxRecipients::Some(vec![0]) },
        ],
        adversary: AdversarySpec::default(),
        seed: 1,
    }
}

fn assert_all_pass(trace: &thaw_core::Trace) {
    for v in checkers::check_all(trace) {
        assert!(v.pass, "{} failed: {} {:?}", v.checker, v.detail, v.evidence);
    }
}

#[test]
fn honest_simple_sync_run_confirms_and_passes_all_checkers() {
    let cfg = honest_config(InternalSpec::SimpleSync, 4, 1);
    let trace = runner::run(&cfg).unwrap();
    let confirms: Vec<_> = trace
        .events
        .iter()
        .filter(|e| matches!(e.body, EventBody::Confirm { .. }))
        .collect();
    assert!(!confirms.is_empty(), "no confirmations in an honest run");
    let last = trace
        .events
        .iter()
        .filter_map(|e| match (&e.body, e.party.as_str()) {
            (EventBody::Confirm { ledger }, "c0") => Some(ledger.clone()),
            _ => None,
        })
        .next_back()
        .unwrap();
    assert_eq!(last, vec!["t1".to_string(), "t2".into(), "t3".into()]);
    assert!(trace.events.iter().all(|e| !matches!(e.body, EventBody::WitnessReject { .. })));
    assert_all_pass(&trace);
}

#[test]
fn honest_oracle_run_passes_all_checkers() {
    let cfg = honest_config(InternalSpec::ScriptedOracle { u_pi: 4 }, 5, 2);
    let trace = runner::run(&cfg).unwrap();
    assert!(trace.events.iter().any(|e| matches!(e.body, EventBody::Confirm { .. })));
    assert_all_pass(&trace);
}

#[test]
fn identical_configs_replay_to_identical_traces() {
    let cfg = honest_config(InternalSpec::SimpleSync, 4, 1);
    let a = runner::run(&cfg).unwrap().to_jsonl();
    let b = runner::run(&cfg).unwrap().to_jsonl();
    assert_eq!(a, b);
    let mut other = cfg;
    other.seed = 2;
    let c = runner::run(&other).unwrap().to_jsonl();
    assert_ne!(a, c, "seed must be part of the trace identity");
}

#[test]
fn sleepy_client_catches_up_after_waking() {
    let mut cfg = honest_config(InternalSpec::ScriptedOracle { u_pi: 4 }, 4, 2);
    cfg.clients.push(ClientEntry { wake: 40, sleep: None, corrupt_round: None });
    let trace = runner::run(&cfg).unwrap();
    let c2_confirms: Vec<_> = trace
        .events
        .iter()
        .filter(|e| e.party == "c2" && matches!(e.body, EventBody::Confirm { .. }))
        .collect();
    assert!(!c2_confirms.is_empty(), "late waker never confirmed");
    assert_all_pass(&trace);
}

#[test]
fn double_spend_demo_freezes_then_recovers() {
    let demo = demos::double_spend();
    let (trace, verdicts, ok) = demos::run_demo(&demo).unwrap();
    assert!(
        ok,
        "verdicts: {:?}",
        verdicts.iter().map(|v| format!("{}={} {}", v.checker, v.pass, v.detail)).collect::<Vec<_>>()
    );
    // The forged forks were seen but never confirmed by anyone.
    assert!(trace.events.iter().any(|e| matches!(e.body, EventBody::Freeze)));
    for e in &trace.events {
        if let EventBody::Confirm { ledger } = &e.body {
            assert!(
                !ledger.iter().any(|id| id.starts_with("dspend")),
                "forged tx confirmed at {e:?}"
            );
        }
    }
    // Recovery happened and the dead-zone tx made it in.
    assert!(trace.events.iter().any(|e| matches!(e.body, EventBody::NewGenesis { .. })));
    let confirmed_dead_zone = trace.events.iter().any(|e| match &e.body {
        EventBody::Confirm { ledger } => ledger.iter().any(|id| id == "t3"),
        _ => false,
    });
    assert!(confirmed_dead_zone, "dead-zone tx t3 never confirmed after recovery");
}

#[test]
fn eve_demo_recovers_the_long_ledger() {
    let demo = demos::eve();
    let (trace, verdicts, ok) = demos::run_demo(&demo).unwrap();
    assert!(
        ok,
        "verdicts: {:?}",
        verdicts.iter().map(|v| format!("{}={} {}", v.checker, v.pass, v.detail)).collect::<Vec<_>>()
    );
    // The new genesis must contain the long forged extension the fast client
    // confirmed, and not the fake fork.
    let genesis = trace
        .events
        .iter()
        .find_map(|e| match &e.body {
            EventBody::NewGenesis { ledger } => Some(ledger.clone()),
            _ => None,
        })
        .expect("recovery completed");
    assert!(genesis.iter().any(|id| id == "adv-long"), "genesis {genesis:?}");
    assert!(!genesis.iter().any(|id| id == "adv-fork"), "genesis {genesis:?}");
}

#[test]
fn no_wait_control_breaks_safety() {
    let (_, verdicts) = demos::no_wait_break_demo().unwrap();
    assert!(verdicts.iter().any(|v| v.checker == "safety" && !v.pass));
    // Everything else still holds: the violation is specifically safety.
    for v in &verdicts {
        if v.checker != "safety" {
            assert!(v.pass, "{} failed: {}", v.checker, v.detail);
        }
    }
}

#[test]
fn same_attack_with_the_wait_stays_safe() {
    let mut cfg = demos::no_wait().config;
    cfg.name = "demo_no_wait_restored".into();
    cfg.client_wait_mult = Some(1);
    let trace = runner::run(&cfg).unwrap();
    assert_all_pass(&trace);
}
