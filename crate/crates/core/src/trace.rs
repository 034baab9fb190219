//! Append-only execution traces.
//!
//! A trace file is line-delimited JSON: a meta record first, then one event
//! per line with canonical field order, so identical runs produce byte-equal
//! files. Checkers consume nothing but the trace.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::internal::{InstanceId, Witness};
use crate::ledger::{Ledger, Round, TxId};
use crate::message::Payload;
use crate::net::MsgId;
use crate::party::PartyId;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub version: u32,
    /// Internal-protocol confirmation latency: measured for the concrete
    /// implementation, declared for the oracle.
    pub u_pi: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bc: Option<u64>,
    pub quorum: usize,
    pub validator_wait: u64,
    pub client_wait: u64,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRepr {
    pub digest: String,
    pub era: u32,
    pub genesis: Vec<TxId>,
    pub valset: Vec<usize>,
    pub start: Round,
}

impl InstanceRepr {
    pub fn of(instance: &InstanceId) -> Self {
        use crate::crypto::Encode;
        InstanceRepr {
            digest: instance.digest().short(),
            era: instance.era,
            genesis: instance.genesis.ids().to_vec(),
            valset: instance.valset.members().iter().map(|p| p.index).collect(),
            start: instance.start_round,
        }
    }

    pub fn genesis_ledger(&self) -> Ledger {
        Ledger::from_ids(self.genesis.iter().cloned())
    }

    pub fn quorum(&self) -> usize {
        self.valset.len() / 2 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRepr {
    pub signer: String,
    pub ledger: Vec<TxId>,
}

/// Structured view of a payload, rich enough for every checker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum PayloadRepr {
    Tx { id: TxId },
    Vote { signer: String, instance: String, ledger: Vec<TxId> },
    Witness { instance: InstanceRepr, votes: Vec<VoteRepr> },
    Recover { valset: Vec<usize> },
    Proposal { proposer: String, epoch: u64, height: u64, txs: Vec<TxId> },
    BlockVote { voter: String, epoch: u64, block: String },
    Bookmark { sender: String, ledger: Vec<TxId>, signers: Vec<String> },
    GenesisVote { voter: String, instance: InstanceRepr },
}

impl PayloadRepr {
    pub fn of(p: &Payload) -> Self {
        match p {
            Payload::Tx(tx) => PayloadRepr::Tx { id: tx.id.clone() },
            Payload::Vote(v) => PayloadRepr::Vote {
                signer: v.signer().to_string(),
                instance: v.instance.short(),
                ledger: v.ledger.ids().to_vec(),
            },
            Payload::Witness(w) => PayloadRepr::of_witness(w),
            Payload::Recover { valset } => PayloadRepr::Recover {
                valset: valset.members().iter().map(|p| p.index).collect(),
            },
            Payload::Internal(crate::internal::InternalMsg::Proposal(p)) => PayloadRepr::Proposal {
                proposer: p.block.proposer.to_string(),
                epoch: p.block.epoch,
                height: p.block.height,
                txs: p.block.txs.clone(),
            },
            Payload::Internal(crate::internal::InternalMsg::BlockVote(v)) => PayloadRepr::BlockVote {
                voter: v.sig.signer().to_string(),
                epoch: v.epoch,
                block: v.block.short(),
            },
            Payload::Bookmark(c) => PayloadRepr::Bookmark {
                sender: c.sender.to_string(),
                ledger: c.value.ids().to_vec(),
                signers: c.sigs.iter().map(|s| s.signer().to_string()).collect(),
            },
            Payload::Genesis(g) => PayloadRepr::GenesisVote {
                voter: g.sig.signer().to_string(),
                instance: InstanceRepr::of(&g.instance),
            },
        }
    }

    fn of_witness(w: &Witness) -> Self {
        PayloadRepr::Witness {
            instance: InstanceRepr::of(&w.instance),
            votes: w
                .votes
                .iter()
                .map(|v| VoteRepr { signer: v.signer().to_string(), ledger: v.ledger.ids().to_vec() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsOutcome {
    pub sender: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<Vec<TxId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    Send { msg: MsgId, digest: String, payload: PayloadRepr },
    Deliver { msg: MsgId, from: String, digest: String },
    Inject { msg: MsgId, digest: String, to: Vec<String>, payload: PayloadRepr },
    Corrupt,
    Kill,
    Recover { valset: Vec<usize> },
    WitnessReject { digest: String, reason: String },
    Confirm { ledger: Vec<TxId> },
    Bookmark { ledger: Vec<TxId> },
    Freeze,
    DsBroadcast { ledger: Vec<TxId> },
    DsDeliver { delivered: Vec<DsOutcome> },
    NewGenesis { ledger: Vec<TxId> },
    GenesisVote { instance: String, ledger: Vec<TxId> },
    Restart { instance: String, ledger: Vec<TxId>, carried: usize },
    TxInput { id: TxId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub round: Round,
    pub party: String,
    #[serde(flatten)]
    pub body: EventBody,
}

impl TraceEvent {
    pub fn party_id(&self) -> Option<PartyId> {
        self.party.parse().ok()
    }

    pub fn ledger(&self) -> Option<Ledger> {
        let ids = match &self.body {
            EventBody::Confirm { ledger }
            | EventBody::Bookmark { ledger }
            | EventBody::DsBroadcast { ledger }
            | EventBody::NewGenesis { ledger }
            | EventBody::GenesisVote { ledger, .. }
            | EventBody::Restart { ledger, .. } => ledger,
            _ => return None,
        };
        Some(Ledger::from_ids(ids.iter().cloned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {0}: {1}")]
    Parse(usize, serde_json::Error),
    #[error("empty trace file")]
    Empty,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&self.meta).expect("serialize meta"));
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("serialize event"));
            out.push('\n');
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or(TraceError::Empty)??;
        let meta: TraceMeta = serde_json::from_str(&first).map_err(|e| TraceError::Parse(1, e))?;
        let mut events = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| TraceError::Parse(i + 2, e))?);
        }
        Ok(Trace { meta, events })
    }
}
