//! Fan-out of (sweep point, mode, seed) cells over a bounded worker pool.

use rayon::prelude::*;
use relay_core::agent::{train, Mode};
use relay_core::rng::StreamKey;

use crate::config::{ExperimentConfig, SweepPoint};
use crate::error::{Error, Result};
use crate::store::{CellKey, Manifest, ResultStore, RunRecord, SCHEMA_VERSION};

/// Environment variable holding the worker count.
pub const WORKERS_VAR: &str = "RELAY_WORKERS";

pub fn workers() -> usize {
    std::env::var(WORKERS_VAR)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub point: SweepPoint,
    pub mode: Mode,
    pub seed: u64,
}

impl Cell {
    pub fn key(&self) -> CellKey {
        CellKey { sweep_index: self.point.index, mode: self.mode, seed: self.seed }
    }
}

pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for point in config.points() {
        for &mode in &config.modes {
            for &seed in &config.seeds {
                out.push(Cell { point, mode, seed });
            }
        }
    }
    out
}

/// Trains one cell. Both modes of a (seed, sweep point) pair draw from the
/// same stream, so they see the same environment noise.
pub fn run_cell(config: &ExperimentConfig, cell: Cell) -> Result<RunRecord> {
    let c = config.at(cell.point)?;
    let task = c.env.build()?;
    let agent = relay_core::agent::AgentConfig { seed: cell.seed, ..c.agent };
    let mut rng = StreamKey::new(config.hash(), 0, cell.seed, cell.point.index as u64).rng();
    let result = train(&task, cell.mode, &agent, &mut rng)?;
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        experiment_name: config.experiment_name.clone(),
        config_hash: config.hash_hex(),
        mode: cell.mode,
        seed: cell.seed,
        sweep_index: cell.point.index,
        sweep_param: config.sweep.as_ref().map(|s| s.param.clone()),
        sweep_value: cell.point.value,
        result,
    })
}

/// Runs `cells` on the worker pool and returns records in input order.
pub fn run_cells(config: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<RunRecord>> {
    pool()?.install(|| cells.par_iter().map(|&cell| run_cell(config, cell)).collect())
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

#[derive(Debug)]
pub struct RunSummary {
    pub executed: usize,
    pub skipped: usize,
    pub store: ResultStore,
}

/// Validates, writes the manifest, runs every missing cell and rebuilds
/// the summary CSV. Re-running a complete store executes nothing.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let store = ResultStore::create(&config.output_dir, &Manifest::new(config))?;
    let all = cells(config);
    let pending: Vec<Cell> = all.iter().copied().filter(|c| !store.contains(&c.key())).collect();
    let skipped = all.len() - pending.len();
    pool()?.install(|| {
        pending.par_iter().try_for_each(|&cell| {
            let record = run_cell(config, cell)?;
            store.append(&record)
        })
    })?;
    store.write_summary()?;
    Ok(RunSummary { executed: pending.len(), skipped, store })
}
