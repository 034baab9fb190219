//! Corpus runner: executes every scenario in a directory across a seed
//! range, checks every trace, and compares the failing checker set against
//! each scenario's expectation. Negative controls declare the checkers they
//! must break; a control that passes fails the suite, guarding against
//! vacuous checkers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkers;
use crate::config::ScenarioConfig;
use crate::runner;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(flatten)]
    pub config: ScenarioConfig,
    /// Checkers this scenario is required to fail (negative controls).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect_fail: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub seeds: u64,
    pub expect_fail: Vec<String>,
    /// How many seeds each checker failed on.
    pub failures: BTreeMap<String, u64>,
    pub ok: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub outcomes: Vec<ScenarioOutcome>,
    pub ok: bool,
}

pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, ScenarioFile)>, String> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("reading {}: {e}", dir.display()))?
        .filter_map(|ent| ent.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format!("no scenario files in {}", dir.display()));
    }
    let mut out = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        let sf: ScenarioFile =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
        out.push((p, sf));
    }
    Ok(out)
}

/// Runs one scenario over `seeds` consecutive seeds and classifies the
/// result against its expectation. The base seed also replays once to
/// confirm byte-identical traces.
pub fn run_scenario(sf: &ScenarioFile, seeds: u64) -> ScenarioOutcome {
    let expected: BTreeSet<&str> = sf.expect_fail.iter().map(|s| s.as_str()).collect();
    let known = checkers::checker_names();
    let mut notes: Vec<String> = sf
        .expect_fail
        .iter()
        .filter(|e| !known.contains(&e.as_str()))
        .map(|e| format!("unknown checker in expect_fail: {e}"))
        .collect();

    let per_seed: Vec<(u64, Result<BTreeSet<String>, String>)> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let mut cfg = sf.config.clone();
            cfg.seed = sf.config.seed.wrapping_add(i);
            let outcome = match runner::run(&cfg) {
                Ok(trace) => Ok(checkers::check_all(&trace)
                    .into_iter()
                    .filter(|v| !v.pass)
                    .map(|v| v.checker)
                    .collect()),
                Err(e) => Err(e.to_string()),
            };
            (i, outcome)
        })
        .collect();

    let mut failures: BTreeMap<String, u64> = BTreeMap::new();
    for (i, outcome) in &per_seed {
        match outcome {
            Err(e) => notes.push(format!("seed +{i}: run failed: {e}")),
            Ok(failed) => {
                for f in failed {
                    *failures.entry(f.clone()).or_default() += 1;
                }
                let got: BTreeSet<&str> = failed.iter().map(|s| s.as_str()).collect();
                if got != expected {
                    notes.push(format!(
                        "seed +{i}: failing checkers {got:?}, expected {expected:?}"
                    ));
                }
            }
        }
    }

    // Determinism probe on the base seed.
    if let (Ok(a), Ok(b)) = (runner::run(&sf.config), runner::run(&sf.config)) {
        if a.to_jsonl() != b.to_jsonl() {
            notes.push("replay of the base seed produced a different trace".into());
        }
    }

    ScenarioOutcome {
        name: sf.config.name.clone(),
        seeds,
        expect_fail: sf.expect_fail.clone(),
        failures,
        ok: notes.is_empty(),
        notes,
    }
}

pub fn run_suite(dir: &Path, seeds: u64) -> Result<SuiteReport, String> {
    let entries = load_dir(dir)?;
    let outcomes: Vec<ScenarioOutcome> =
        entries.iter().map(|(_, sf)| run_scenario(sf, seeds)).collect();
    let ok = outcomes.iter().all(|o| o.ok);
    Ok(SuiteReport { outcomes, ok })
}
