use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use relay_harness::config::ExperimentConfig;
use relay_harness::report::{emit_report, ReportKind};
use relay_harness::run::run_experiment;
use relay_harness::store::ResultStore;
use relay_harness::verify::{run_suite, Suite};

/// Relay potential experiments: run, verify, report.
#[derive(Parser)]
#[command(name = "relay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (mode, seed) cell of a config file.
    Run { config: PathBuf },
    /// Run a config that declares a `[sweep]` table.
    Sweep { config: PathBuf },
    /// Check the theory suites: all, potentials, efe, sampler, topology, agent.
    Verify {
        suite: String,
        /// Print the checks as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write CSV and SVG aggregates for a result store.
    Report {
        store: PathBuf,
        #[arg(long)]
        kind: String,
    },
}

const CHECK_FAILED: u8 = 1;
const CONFIG_ERROR: u8 = 2;

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<relay_harness::Error>().is_some_and(|e| e.is_config());
            ExitCode::from(if config { CONFIG_ERROR } else { CHECK_FAILED })
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return Ok(ExitCode::from(if e.use_stderr() { CONFIG_ERROR } else { 0 }));
        }
    };
    match cli.command {
        Command::Run { config } => run(&config, false),
        Command::Sweep { config } => run(&config, true),
        Command::Verify { suite, json } => {
            let suite: Suite = suite.parse()?;
            let checks = run_suite(suite)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&checks)?);
            } else {
                for c in &checks {
                    println!("{c}");
                }
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            eprintln!("{} checks, {failed} failed", checks.len());
            Ok(ExitCode::from(if failed == 0 { 0 } else { CHECK_FAILED }))
        }
        Command::Report { store, kind } => {
            let kind: ReportKind = kind.parse()?;
            let store = ResultStore::open(&store)?;
            for path in emit_report(&store, kind)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(path: &Path, need_sweep: bool) -> anyhow::Result<ExitCode> {
    let config = ExperimentConfig::load(path)?;
    if need_sweep && config.sweep.is_none() {
        return Err(relay_harness::Error::Config(format!("{} has no [sweep] table", path.display())).into());
    }
    let summary = run_experiment(&config).with_context(|| format!("running {}", config.experiment_name))?;
    println!(
        "{}: {} runs executed, {} already present, store {}",
        config.experiment_name,
        summary.executed,
        summary.skipped,
        summary.store.root().display()
    );
    Ok(ExitCode::SUCCESS)
}
