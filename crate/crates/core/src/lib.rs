//! Round-synchronous simulator for freezing and recovery gadgets over
//! certifiable ledger protocols, with machine-checked verdicts for the
//! safety, liveness and recovery properties the construction provides.
//!
//! The building blocks: [`ledger`] holds the prefix algebra everything is
//! phrased in; [`net`] is the synchronous network with adversary-scheduled
//! delivery; [`internal`] defines the certifiable protocol interface with
//! two interchangeable implementations behind it; [`freezing`] and
//! [`recovery`] are the gadgets proper; [`broadcast`] is the bookmark
//! broadcast used at recovery; [`adversary`] hosts the attack strategies,
//! selected by name; [`runner`] executes scenarios deterministically into
//! traces; [`checkers`] turns traces into verdicts; [`suite`] runs a corpus
//! of scenarios, including negative controls that are expected to fail.

pub mod adversary;
pub mod broadcast;
pub mod checkers;
pub mod config;
pub mod crypto;
pub mod demos;
pub mod freezing;
pub mod internal;
pub mod ledger;
pub mod message;
pub mod net;
pub mod party;
pub mod recovery;
pub mod runner;
pub mod suite;
pub mod trace;

pub use config::{ProtocolMode, ScenarioConfig};
pub use ledger::{majority_prefix, Ledger, Round, Transaction, TxId};
pub use party::{PartyId, ValidatorSet};
pub use runner::{run, RunError};
pub use trace::Trace;
