//! Scenario configuration and model-constraint validation.
//!
//! A scenario is a complete experiment description; identical configs
//! (including the seed) replay to byte-identical traces. Validation enforces
//! the model: the corrupted fraction stays below one half before the
//! majority round and again from the recovery round on (over the healed
//! set), corruption never recedes except through the kill at recovery, and
//! kills happen only there.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::internal::InternalSpec;
use crate::ledger::{Round, TxId};
use crate::party::ValidatorSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Clients only: wait, confirm absent conflict, freeze forever on
    /// conflict.
    Freezing,
    /// Validators bookmark, clients confirm with the longer wait, and the
    /// recovery procedure runs at `r_rec` if scheduled.
    Recovery,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionEntry {
    pub validator: usize,
    pub round: Round,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientEntry {
    pub wake: Round,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sleep: Option<Round>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_round: Option<Round>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TxRecipients {
    /// The literal string "all".
    All(AllTag),
    Some(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllTag {
    All,
}

impl Default for TxRecipients {
    fn default() -> Self {
        TxRecipients::All(AllTag::All)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxEntry {
    pub id: TxId,
    pub round: Round,
    #[serde(default)]
    pub to: TxRecipients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec { name: "silent".into(), params: serde_json::Value::Null }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub delta: u64,
    /// Last simulated round (inclusive).
    pub horizon: Round,
    pub protocol: ProtocolMode,
    pub internal: InternalSpec,
    /// Validator bookmark wait as a multiple of delta; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validator_wait_mult: Option<u64>,
    /// Client confirm wait as a multiple of delta; defaults to 1 for the
    /// freezing protocol and 3 for the recovery protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_wait_mult: Option<u64>,
    #[serde(default = "default_true")]
    pub client_gossip: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_maj: Option<Round>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_rec: Option<Round>,
    /// Validators removed by the environment at `r_rec`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kill: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corruptions: Vec<CorruptionEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clients: Vec<ClientEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub txs: Vec<TxEntry>,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub seed: u64,
}

/// Values derived from a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub quorum: usize,
    /// Waits in rounds (multiples already applied).
    pub validator_wait: u64,
    pub client_wait: u64,
    pub v_new: Option<ValidatorSet>,
    pub u_bc: Option<u64>,
    /// Round the new instance starts: `r_rec + u_bc`.
    pub restart_round: Option<Round>,
}

#[derive(Debug, Error)]
#[error("invalid scenario config:\n  {}", .0.join("\n  "))]
pub struct ConfigError(pub Vec<String>);

impl ScenarioConfig {
    pub fn validator_wait(&self) -> u64 {
        self.validator_wait_mult.unwrap_or(1) * self.delta
    }

    pub fn client_wait(&self) -> u64 {
        let default_mult = match self.protocol {
            ProtocolMode::Freezing => 1,
            ProtocolMode::Recovery => 3,
        };
        self.client_wait_mult.unwrap_or(default_mult) * self.delta
    }

    /// Corruption round per validator index, if any.
    fn corrupt_round(&self, v: usize) -> Option<Round> {
        self.corruptions.iter().filter(|c| c.validator == v).map(|c| c.round).min()
    }

    pub fn validate(&self) -> Result<Resolved, ConfigError> {
        let mut errs = Vec::new();
        let mut err = |msg: String| errs.push(msg);

        if self.n == 0 {
            err("n must be at least 1".into());
        }
        if self.delta == 0 {
            err("delta must be at least 1".into());
        }
        if self.horizon == 0 {
            err("horizon must be at least 1".into());
        }
        if let InternalSpec::ScriptedOracle { u_pi } = &self.internal {
            if *u_pi <= self.delta {
                err(format!("scripted oracle u_pi ({u_pi}) must exceed delta ({})", self.delta));
            }
        }
        if self.protocol == ProtocolMode::Freezing && self.r_rec.is_some() {
            err("the freezing protocol has no recovery round".into());
        }
        if !crate::adversary::STRATEGIES.contains(&self.adversary.name.as_str()) {
            err(format!("unknown adversary strategy {:?}", self.adversary.name));
        }

        match (self.r_maj, self.r_rec) {
            (Some(m), Some(r)) if m >= r => {
                err(format!("r_maj ({m}) must precede r_rec ({r})"));
            }
            (None, Some(_)) => err("r_rec requires r_maj".into()),
            _ => {}
        }
        if let Some(r) = self.r_rec {
            if r > self.horizon {
                err(format!("r_rec ({r}) past horizon ({})", self.horizon));
            }
        }
        if !self.kill.is_empty() && self.r_rec.is_none() {
            err("kill set without r_rec: validators are killed only at recovery".into());
        }
        for k in &self.kill {
            if *k >= self.n {
                err(format!("kill index {k} out of range"));
            }
        }

        let mut seen_corrupt = BTreeSet::new();
        for c in &self.corruptions {
            if c.validator >= self.n {
                err(format!("corruption of unknown validator {}", c.validator));
            }
            if !seen_corrupt.insert(c.validator) {
                err(format!("validator {} corrupted twice", c.validator));
            }
        }
        for (i, c) in self.clients.iter().enumerate() {
            if let Some(s) = c.sleep {
                if s <= c.wake {
                    err(format!("client {i} sleeps at {s} before waking at {}", c.wake));
                }
            }
        }
        let mut tx_ids = BTreeSet::new();
        for t in &self.txs {
            if !tx_ids.insert(&t.id) {
                err(format!("duplicate tx id {:?}", t.id));
            }
            if t.round > self.horizon {
                err(format!("tx {:?} submitted past horizon", t.id));
            }
            if let TxRecipients::Some(v) = &t.to {
                if v.is_empty() {
                    err(format!("tx {:?} has no recipients", t.id));
                }
                for i in v {
                    if *i >= self.n {
                        err(format!("tx {:?} addressed to unknown validator {i}", t.id));
                    }
                }
            }
        }

        let kill_set: BTreeSet<usize> = self.kill.iter().copied().collect();
        let v_new = self
            .r_rec
            .map(|_| ValidatorSet::from_indices((0..self.n).filter(|i| !kill_set.contains(i))));
        if let Some(v_new) = &v_new {
            if v_new.is_empty() {
                err("kill set leaves no validators".into());
            }
        }

        // f(r) bounds. Corruption is monotone and kills happen only at r_rec
        // by construction, so only the fractions need checking.
        let corrupted_by = |r: Round| -> usize {
            (0..self.n).filter(|v| self.corrupt_round(*v).is_some_and(|c| c <= r)).count()
        };
        let pre_limit = self.r_maj.unwrap_or(self.horizon + 1);
        let change_rounds: BTreeSet<Round> =
            self.corruptions.iter().map(|c| c.round).chain([0]).collect();
        for r in change_rounds.iter().copied().filter(|r| *r < pre_limit) {
            let f = corrupted_by(r);
            if 2 * f >= self.n {
                err(format!(
                    "corrupted fraction must stay below 1/2 before r_maj: {f}/{} at round {r}",
                    self.n
                ));
            }
        }
        if let (Some(r_rec), Some(v_new)) = (self.r_rec, &v_new) {
            let rounds: BTreeSet<Round> =
                self.corruptions.iter().map(|c| c.round).chain([r_rec]).collect();
            for r in rounds.into_iter().filter(|r| *r >= r_rec) {
                let f = v_new
                    .members()
                    .iter()
                    .filter(|p| self.corrupt_round(p.index).is_some_and(|c| c <= r))
                    .count();
                if 2 * f >= v_new.len() {
                    err(format!(
                        "healed set must keep honest majority: {f}/{} corrupted at round {r}",
                        v_new.len()
                    ));
                }
            }
        }

        let u_bc = v_new.as_ref().map(|v| crate::broadcast::duration(v.len(), self.delta));
        let restart_round = self.r_rec.zip(u_bc).map(|(r, u)| r + u);
        if let Some(restart) = restart_round {
            if restart > self.horizon {
                err(format!(
                    "horizon ({}) ends before the restart at r_rec + u_bc = {restart}",
                    self.horizon
                ));
            }
        }

        if !errs.is_empty() {
            return Err(ConfigError(errs));
        }
        Ok(Resolved {
            quorum: ValidatorSet::full(self.n).quorum(),
            validator_wait: self.validator_wait(),
            client_wait: self.client_wait(),
            v_new,
            u_bc,
            restart_round,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig {
            name: "t".into(),
            n: 4,
            delta: 1,
            horizon: 100,
            protocol: ProtocolMode::Recovery,
            internal: InternalSpec::SimpleSync,
            validator_wait_mult: None,
            client_wait_mult: None,
            client_gossip: true,
            r_maj: None,
            r_rec: None,
            kill: vec![],
            corruptions: vec![],
            clients: vec![ClientEntry { wake: 0, sleep: None, corrupt_round: None }],
            txs: vec![],
            adversary: AdversarySpec::default(),
            seed: 0,
        }
    }

    #[test]
    fn honest_config_validates() {
        let r = base().validate().unwrap();
        assert_eq!(r.quorum, 3);
        assert_eq!(r.client_wait, 3);
        assert_eq!(r.validator_wait, 1);
        assert!(r.v_new.is_none());
    }

    #[test]
    fn majority_before_r_maj_rejected() {
        let mut c = base();
        c.r_maj = Some(50);
        c.r_rec = Some(60);
        c.corruptions = vec![
            CorruptionEntry { validator: 0, round: 10 },
            CorruptionEntry { validator: 1, round: 10 },
        ];
        c.kill = vec![0, 1];
        let e = c.validate().unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("below 1/2 before r_maj")), "{e}");
    }

    #[test]
    fn healed_set_needs_honest_majority() {
        let mut c = base();
        c.r_maj = Some(50);
        c.r_rec = Some(60);
        c.corruptions = vec![
            CorruptionEntry { validator: 0, round: 50 },
            CorruptionEntry { validator: 1, round: 50 },
            CorruptionEntry { validator: 2, round: 50 },
        ];
        c.kill = vec![0]; // still 2 corrupted of 3 surviving
        let e = c.validate().unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("honest majority")), "{e}");
        c.kill = vec![0, 1, 2];
        assert!(c.validate().is_ok(), "{:?}", c.validate().err());
    }

    #[test]
    fn recovery_must_fit_horizon() {
        let mut c = base();
        c.r_maj = Some(50);
        c.r_rec = Some(99);
        c.corruptions = vec![CorruptionEntry { validator: 0, round: 50 }];
        c.kill = vec![0];
        // n' = 3, u_bc = 2: restart at 101 > 100.
        let e = c.validate().unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("restart")), "{e}");
    }

    #[test]
    fn config_round_trips_through_json() {
        let mut c = base();
        c.r_maj = Some(40);
        c.r_rec = Some(50);
        c.kill = vec![3];
        c.txs = vec![
            TxEntry { id: "t1".into(), round: 2, to: TxRecipients::default() },
            TxEntry { id: "t2".into(), round: 3, to: TxRecipients::Some(vec![0, 1]) },
        ];
        c.corruptions = vec![CorruptionEntry { validator: 3, round: 40 }];
        let s = serde_json::to_string(&c).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(s.contains("\"to\":\"all\""), "{s}");
    }
}
