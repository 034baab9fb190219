use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use thaw_core::checkers::{self, Verdict};
use thaw_core::suite;
use thaw_core::trace::Trace;
use thaw_core::{demos, runner};

mod timeline;

/// Round-synchronous simulator for freezing and recovery ledger gadgets.
#[derive(Parser)]
#[command(name = "thaw", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario config and persist its trace.
    Run {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Where to write the JSONL trace.
        #[arg(long)]
        trace_out: PathBuf,
    },
    /// Run checkers over a persisted trace; nonzero exit on any failure.
    Check {
        /// Trace file written by `run`.
        #[arg(long)]
        trace: PathBuf,
        /// Run a single checker by name instead of all of them.
        #[arg(long)]
        checker: Option<String>,
    },
    /// Run every scenario in a directory across consecutive seeds, holding
    /// negative controls to their declared failures.
    Suite {
        /// Scenario directory; defaults to $THAW_SCENARIOS, then ./scenarios.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Replay a built-in narrative scenario with an annotated timeline.
    Demo {
        /// One of: double-spend, eve, no-wait. Omit to list them.
        name: Option<String>,
    },
}

// Exit codes: 0 pass, 1 verdict failure, 2 config or IO error.
fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Run { config, trace_out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("{}: {e}", config.display()))?;
            let sf: suite::ScenarioFile =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", config.display()))?;
            let trace = runner::run(&sf.config).map_err(|e| e.to_string())?;
            let file = File::create(&trace_out)
                .map_err(|e| format!("{}: {e}", trace_out.display()))?;
            trace.write_to(BufWriter::new(file)).map_err(|e| e.to_string())?;
            println!(
                "{}: {} rounds, {} events -> {}",
                sf.config.name,
                sf.config.horizon + 1,
                trace.events.len(),
                trace_out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { trace, checker } => {
            let file = File::open(&trace).map_err(|e| format!("{}: {e}", trace.display()))?;
            let t = Trace::read_from(BufReader::new(file)).map_err(|e| e.to_string())?;
            let verdicts: Vec<Verdict> = match checker {
                Some(name) => {
                    let c = checkers::by_name(&name).ok_or_else(|| {
                        format!("unknown checker {name:?} (known: {:?})", checkers::checker_names())
                    })?;
                    vec![c.check(&t)]
                }
                None => checkers::check_all(&t),
            };
            let passed = verdicts.iter().filter(|v| v.pass).count();
            for v in &verdicts {
                let tag = if v.pass { "PASS" } else { "FAIL" };
                println!("{tag} {:<20} {}", v.checker, v.detail);
                if let Some(e) = &v.evidence {
                    println!("     evidence: {e}");
                }
            }
            println!("{passed}/{} checkers pass", verdicts.len());
            if passed == verdicts.len() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Suite { dir, seeds } => {
            let dir = dir
                .or_else(|| std::env::var_os("THAW_SCENARIOS").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("scenarios"));
            let report = suite::run_suite(&dir, seeds)?;
            println!("{:<36} {:>5}  {:<28} result", "scenario", "seeds", "expect_fail");
            for o in &report.outcomes {
                let expect =
                    if o.expect_fail.is_empty() { "-".to_string() } else { o.expect_fail.join(",") };
                let result = if o.ok { "ok".to_string() } else { format!("VIOLATION ({})", o.notes.len()) };
                println!("{:<36} {:>5}  {:<28} {result}", o.name, o.seeds, expect);
                for n in &o.notes {
                    println!("    {n}");
                }
            }
            let ok_count = report.outcomes.iter().filter(|o| o.ok).count();
            println!("{ok_count}/{} scenarios as expected", report.outcomes.len());
            Ok(if report.ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Demo { name } => {
            let Some(name) = name else {
                println!("available demos:");
                for d in demos::all() {
                    println!("  {:<14} {}", d.name, d.summary);
                }
                return Ok(ExitCode::SUCCESS);
            };
            let demo = demos::by_name(&name).ok_or_else(|| {
                let names: Vec<_> = demos::all().iter().map(|d| d.name).collect();
                format!("unknown demo {name:?} (known: {names:?})")
            })?;
            let (trace, verdicts, ok) = demos::run_demo(&demo).map_err(|e| e.to_string())?;
            println!("demo {}: {}", demo.name, demo.summary);
            println!();
            timeline::print(&trace);
            println!();
            for v in &verdicts {
                let expected_fail = demo.expect_fail.contains(&v.checker.as_str());
                let tag = match (v.pass, expected_fail) {
                    (true, false) => "PASS",
                    (false, true) => "FAIL (as intended)",
                    (true, true) => "PASS (should have failed!)",
                    (false, false) => "FAIL",
                };
                println!("{tag:<26} {:<20} {}", v.checker, v.detail);
            }
            println!();
            if ok {
                println!("demo outcome as intended");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("demo outcome NOT as intended");
                Ok(ExitCode::from(1))
            }
        }
    }
}
