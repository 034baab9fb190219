//! Built-in narrative scenarios: the double-spend split the gadget defuses,
//! the lagging-client recovery story, and the negative control showing the
//! confirmation wait is load-bearing.

use crate::checkers::{self, Verdict};
use crate::config::{
    AdversarySpec, ClientEntry, CorruptionEntry, ProtocolMode, ScenarioConfig, TxEntry,
    TxRecipients,
};
use crate::internal::InternalSpec;
use crate::runner::{self, RunError};
use crate::trace::Trace;

pub struct Demo {
    pub name: &'static str,
    pub summary: &'static str,
    pub config: ScenarioConfig,
    /// Checkers that must fail for the demo to count as successful.
    pub expect_fail: Vec<&'static str>,
}

pub fn all() -> Vec<Demo> {
    vec![double_spend(), eve(), no_wait()]
}

pub fn by_name(name: &str) -> Option<Demo> {
    all().into_iter().find(|d| d.name == name)
}

fn clients(n: usize) -> Vec<ClientEntry> {
    (0..n).map(|_| ClientEntry { wake: 0, sleep: None, corrupt_round: None }).collect()
}

fn txs(entries: &[(&str, u64)]) -> Vec<TxEntry> {
    entries
        .iter()
        .map(|(id, round)| TxEntry { id: (*id).into(), round: *round, to: TxRecipients::default() })
        .collect()
}

/// A majority adversary splits the clients across two forged forks; the
/// confirmation wait plus client gossip freezes everyone instead, and
/// recovery restarts from a genesis extending every confirmed ledger.
pub fn double_spend() -> Demo {
    Demo {
        name: "double-spend",
        summary: "forked witnesses to disjoint client groups; the gadget freezes and recovers",
        config: ScenarioConfig {
            name: "demo_double_spend".into(),
            n: 4,
            delta: 2,
            horizon: 110,
            protocol: ProtocolMode::Recovery,
            internal: InternalSpec::SimpleSync,
            validator_wait_mult: None,
            client_wait_mult: None,
            client_gossip: true,
            r_maj: Some(40),
            r_rec: Some(60),
            kill: vec![1, 2, 3],
            corruptions: vec![
                CorruptionEntry { validator: 1, round: 40 },
                CorruptionEntry { validator: 2, round: 40 },
                CorruptionEntry { validator: 3, round: 40 },
            ],
            clients: clients(4),
            txs: txs(&[("t1", 2), ("t2", 6), ("t3", 45)]),
            adversary: AdversarySpec {
                name: "double_spend_equivocator".into(),
                params: serde_json::Value::Null,
            },
            seed: 7,
        },
        expect_fail: vec![],
    }
}

/// The lagging-client story: one client confirms a long forged extension,
/// another freezes behind conflicting evidence, and a corrupted survivor
/// vouches for the fake fork at recovery. The majority vote over bookmarks
/// still restarts from the long ledger.
pub fn eve() -> Demo {
    Demo {
        name: "eve",
        summary: "a lagging client cannot tell the honest extension apart; recovery can",
        config: ScenarioConfig {
            name: "demo_eve".into(),
            n: 7,
            delta: 2,
            horizon: 100,
            protocol: ProtocolMode::Recovery,
            internal: InternalSpec::ScriptedOracle { u_pi: 5 },
            validator_wait_mult: None,
            client_wait_mult: None,
            client_gossip: true,
            r_maj: Some(40),
            r_rec: Some(56),
            kill: vec![4, 5, 6],
            corruptions: vec![
                CorruptionEntry { validator: 3, round: 40 },
                CorruptionEntry { validator: 4, round: 40 },
                CorruptionEntry { validator: 5, round: 40 },
                CorruptionEntry { validator: 6, round: 40 },
            ],
            clients: clients(3),
            txs: txs(&[("t1", 2), ("t9", 50)]),
            adversary: AdversarySpec { name: "eve_confuser".into(), params: serde_json::Value::Null },
            seed: 11,
        },
        expect_fail: vec![],
    }
}

/// Negative control: with the confirmation wait removed, the same
/// double-spend split produces two inconsistent confirmations, which the
/// safety checker must flag.
pub fn no_wait() -> Demo {
    Demo {
        name: "no-wait",
        summary: "wait set to zero; the double-spend split breaks safety, as flagged",
        config: ScenarioConfig {
            name: "demo_no_wait".into(),
            n: 4,
            delta: 2,
            horizon: 50,
            protocol: ProtocolMode::Freezing,
            internal: InternalSpec::ScriptedOracle { u_pi: 5 },
            validator_wait_mult: None,
            client_wait_mult: Some(0),
            client_gossip: true,
            r_maj: Some(30),
            r_rec: None,
            kill: vec![],
            corruptions: vec![
                CorruptionEntry { validator: 1, round: 30 },
                CorruptionEntry { validator: 2, round: 30 },
                CorruptionEntry { validator: 3, round: 30 },
            ],
            clients: clients(2),
            txs: txs(&[("t1", 2)]),
            adversary: AdversarySpec {
                name: "double_spend_equivocator".into(),
                params: serde_json::Value::Null,
            },
            seed: 3,
        },
        expect_fail: vec!["safety"],
    }
}

/// Runs the no-wait control and demands the safety violation: if the attack
/// fails to break anything, the demo itself is the failure.
pub fn no_wait_break_demo() -> Result<(Trace, Vec<Verdict>), RunError> {
    let demo = no_wait();
    let trace = runner::run(&demo.config)?;
    let verdicts = checkers::check_all(&trace);
    let safety_broken = verdicts.iter().any(|v| v.checker == "safety" && !v.pass);
    if !safety_broken {
        return Err(RunError::Contract(
            "zero-wait control did not produce a safety violation; the attack script must be strengthened"
                .into(),
        ));
    }
    Ok((trace, verdicts))
}

/// Runs a demo and reports (trace, verdicts, ok): ok means every checker in
/// `expect_fail` failed and every other checker passed.
pub fn run_demo(demo: &Demo) -> Result<(Trace, Vec<Verdict>, bool), RunError> {
    let trace = runner::run(&demo.config)?;
    let verdicts = checkers::check_all(&trace);
    let ok = verdicts.iter().all(|v| {
        if demo.expect_fail.contains(&v.checker.as_str()) {
            !v.pass
        } else {
            v.pass
        }
    });
    Ok((trace, verdicts, ok))
}
