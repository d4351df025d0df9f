//! Acceptance gate: one line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the lines are always printed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use relay_core::agent::{AgentConfig, Mode};
use relay_harness::config::{EnvSpec, ExperimentConfig, Sweep};
use relay_harness::report::{emit_report, ReportKind};
use relay_harness::run::run_experiment;
use relay_harness::verify::{self, Bound, Check, Suite};
use relay_harness::Result;

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    run: fn() -> Result<Vec<Check>>,
}

fn one(f: fn() -> Result<Check>) -> Result<Vec<Check>> {
    f().map(|c| vec![c])
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable store") {
            let p = e.expect("readable entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

/// A swept island experiment plus all reports, produced twice from scratch,
/// and the JSON of a verify suite run twice.
fn reproducibility() -> Result<Vec<Check>> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let config = ExperimentConfig {
        experiment_name: "repro".into(),
        env: EnvSpec::Island { epsilon: 0.05, size_a: 20, size_b: 10 },
        agent: AgentConfig { episodes: 10, ..Default::default() },
        sweep: Some(Sweep { param: "env.epsilon".into(), values: vec![0.1, 0.02] }),
        seeds: vec![0, 1, 2],
        output_dir: tmp.path().join("store"),
        modes: Mode::ALL.to_vec(),
    };
    let produce = || -> Result<BTreeMap<String, Vec<u8>>> {
        let s = run_experiment(&config)?;
        for kind in [ReportKind::Hitting, ReportKind::Returns, ReportKind::Speedup] {
            emit_report(&s.store, kind)?;
        }
        Ok(snapshot(&config.output_dir))
    };
    let first = produce()?;
    fs::remove_dir_all(&config.output_dir).expect("removable store");
    let second = produce()?;
    let differing = first.keys().chain(second.keys()).filter(|k| first.get(*k) != second.get(*k)).count();
    let suite_json = || serde_json::to_string(&verify::run_suite(Suite::Efe).expect("efe suite")).expect("json");
    let suite_differs = (suite_json() != suite_json()) as usize;
    Ok(vec![
        Check::new("repro/store", "result, manifest and report files differing between two runs", differing as f64, Bound::AtMost { limit: 0.0 }),
        Check::new("repro/verify", "verify reports differing between two runs", suite_differs as f64, Bound::AtMost { limit: 0.0 }),
    ])
}

fn topology() -> Result<Vec<Check>> {
    let mut checks = vec![verify::cheeger_sandwich()?];
    checks.extend(verify::bottleneck_hitting()?);
    Ok(checks)
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, title: "relay operators contract by gamma and gamma^2", budget: secs(10), run: verify::contraction },
        Criterion { id: 2, title: "relay table recovers V* and never exceeds it", budget: secs(30), run: verify::global_optimality },
        Criterion { id: 3, title: "fixed point equals the path oracle", budget: secs(10), run: || one(verify::oracle_equivalence) },
        Criterion { id: 4, title: "discounted shocks add up with gamma^2", budget: secs(30), run: verify::quadratic_discount },
        Criterion { id: 5, title: "free-energy decomposition identity", budget: secs(5), run: || one(verify::efe_identity) },
        Criterion { id: 6, title: "free energy and max-entropy RL differ by a constant", budget: secs(5), run: verify::maxent_equivalence },
        Criterion { id: 7, title: "island speedup is 1/eps", budget: secs(1), run: verify::island_speedup },
        Criterion { id: 8, title: "optimal proposal has zero variance", budget: secs(1), run: verify::optimal_proposal_variance },
        Criterion { id: 9, title: "Fisher surrogate for information gain", budget: secs(30), run: || one(verify::fisher_surrogate) },
        Criterion { id: 10, title: "Gaussian KL second-order proxy", budget: secs(1), run: verify::gaussian_kl_proxy },
        Criterion { id: 11, title: "displaced-anchor error stays within L delta / (1 - gamma)", budget: secs(5), run: || one(verify::hallucination_bound) },
        Criterion { id: 12, title: "Cheeger sandwich and conductance vs hitting time", budget: secs(300), run: topology },
        Criterion { id: 13, title: "generator mode reaches the goal sooner", budget: secs(900), run: verify::agent_speedup },
        Criterion { id: 14, title: "re-runs are byte-identical", budget: secs(60), run: reproducibility },
    ];
    let mut failed = Vec::new();
    for c in &criteria {
        let t = Instant::now();
        let outcome = (c.run)();
        let elapsed = t.elapsed();
        let in_time = elapsed <= c.budget;
        let (passed, detail) = match &outcome {
            Ok(checks) => (checks.iter().all(|k| k.passed) && in_time, checks.iter().map(|k| format!("    {k}")).collect::<Vec<_>>().join("\n")),
            Err(e) => (false, format!("    error: {e}")),
        };
        println!(
            "criterion {:>2} {}: {} ({:.2}s of {}s)",
            c.id,
            if passed { "PASS" } else { "FAIL" },
            c.title,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        println!("{detail}");
        if !in_time {
            println!("    runtime budget exceeded");
        }
        if !passed {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
