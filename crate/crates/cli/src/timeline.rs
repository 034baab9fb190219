//! Annotated timeline rendering for the demo command: the milestone events
//! of a trace, grouped by round, with the network chatter elided.

use thaw_core::trace::{EventBody, Trace};

fn fmt_ledger(ids: &[String]) -> String {
    if ids.is_empty() {
        "[]".to_string()
    } else {
        format!("[{}]", ids.join(" "))
    }
}

pub fn print(trace: &Trace) {
    let cfg = &trace.meta.config;
    println!(
        "n={} delta={} protocol={:?} internal={} u_pi={} adversary={}",
        cfg.n,
        cfg.delta,
        cfg.protocol,
        cfg.internal.name(),
        trace.meta.u_pi,
        cfg.adversary.name,
    );
    let mut marks = vec![];
    if let Some(m) = cfg.r_maj {
        marks.push(format!("r_maj={m}"));
    }
    if let Some(r) = cfg.r_rec {
        marks.push(format!("r_rec={r}"));
        if let Some(u_bc) = trace.meta.u_bc {
            marks.push(format!("restart={}", r + u_bc));
        }
    }
    if !marks.is_empty() {
        println!("timeline: {}", marks.join("  "));
    }

    let mut last_round = None;
    let mut rejects_in_round = 0usize;
    for e in &trace.events {
        let line = match &e.body {
            EventBody::Corrupt => Some(format!("{} corrupted", e.party)),
            EventBody::Kill => Some(format!("{} killed by the environment", e.party)),
            EventBody::Recover { valset } if e.party.starts_with('v') && valset.first().is_some_and(|v| e.party == format!("v{v}")) => {
                Some(format!("recovery announced, surviving validators {valset:?}"))
            }
            EventBody::Recover { .. } if e.party.starts_with('c') => {
                Some(format!("{} told to recover", e.party))
            }
            EventBody::Inject { to, payload, .. } => Some(format!(
                "adversary injects {} via {} to {}",
                match payload {
                    thaw_core::trace::PayloadRepr::Witness { votes, .. } => format!(
                        "witness for {}",
                        fmt_ledger(&votes.first().map(|v| v.ledger.clone()).unwrap_or_default())
                    ),
                    thaw_core::trace::PayloadRepr::Bookmark { ledger, .. } =>
                        format!("bookmark claim {}", fmt_ledger(ledger)),
                    other => format!("{other:?}"),
                },
                e.party,
                to.join(" ")
            )),
            EventBody::Confirm { ledger } => {
                Some(format!("{} confirms {}", e.party, fmt_ledger(ledger)))
            }
            EventBody::Bookmark { ledger } => {
                Some(format!("{} bookmarks {}", e.party, fmt_ledger(ledger)))
            }
            EventBody::Freeze => Some(format!("{} freezes", e.party)),
            EventBody::DsBroadcast { ledger } => {
                Some(format!("{} broadcasts bookmark {}", e.party, fmt_ledger(ledger)))
            }
            EventBody::NewGenesis { ledger } => {
                Some(format!("{} computes new genesis {}", e.party, fmt_ledger(ledger)))
            }
            EventBody::Restart { ledger, carried, .. } => Some(format!(
                "{} restarts from {} carrying {carried} pending txs",
                e.party,
                fmt_ledger(ledger)
            )),
            EventBody::TxInput { id } => Some(format!("{} receives tx {id}", e.party)),
            EventBody::WitnessReject { .. } => {
                rejects_in_round += 1;
                None
            }
            _ => None,
        };
        let Some(line) = line else { continue };
        if last_round != Some(e.round) {
            if rejects_in_round > 0 {
                println!("         ({rejects_in_round} stale witnesses rejected)");
                rejects_in_round = 0;
            }
            println!("r{:>4} ----------------------------------------", e.round);
            last_round = Some(e.round);
        }
        println!("      {line}");
    }
}
