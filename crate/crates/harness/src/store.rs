//! File-backed, append-only result store.
//!
//! ```text
//! <dir>/manifest.json          config snapshot, code version, RNG id
//! <dir>/runs/<key>.json        one record per (mode, seed, sweep point)
//! <dir>/runs.csv               flat summary, rebuilt after every run
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use relay_core::agent::{Mode, RunResult};
use relay_core::rng::RNG_ALGORITHM;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{config_err, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment_name: String,
    pub config_hash: String,
    pub code_version: String,
    pub rng_algorithm: String,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment_name: config.experiment_name.clone(),
            config_hash: config.hash_hex(),
            code_version: CODE_VERSION.into(),
            rng_algorithm: RNG_ALGORITHM.into(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub sweep_index: usize,
    pub mode: Mode,
    pub seed: u64,
}

impl CellKey {
    pub fn file_stem(&self) -> String {
        format!("p{:03}-{}-s{}", self.sweep_index, self.mode, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub experiment_name: String,
    pub config_hash: String,
    pub mode: Mode,
    pub seed: u64,
    pub sweep_index: usize,
    pub sweep_param: Option<String>,
    pub sweep_value: Option<f64>,
    pub result: RunResult,
}

impl RunRecord {
    pub fn key(&self) -> CellKey {
        CellKey { sweep_index: self.sweep_index, mode: self.mode, seed: self.seed }
    }
}

#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
}

impl ResultStore {
    /// Opens `dir`, writing the manifest if the store is new. An existing
    /// store must belong to the same config.
    pub fn create(dir: &Path, manifest: &Manifest) -> Result<Self> {
        let store = Self { root: dir.to_path_buf() };
        fs::create_dir_all(store.runs_dir()).map_err(Error::io(store.runs_dir()))?;
        let path = store.manifest_path();
        if path.exists() {
            let existing = store.manifest()?;
            if existing.config_hash != manifest.config_hash {
                return config_err(format!(
                    "{} holds experiment {} ({}), not {}",
                    dir.display(),
                    existing.experiment_name,
                    existing.config_hash,
                    manifest.config_hash
                ));
            }
        } else {
            write_json(&path, manifest)?;
        }
        Ok(store)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let store = Self { root: dir.to_path_buf() };
        if !store.manifest_path().exists() {
            return Err(Error::NoData(format!("{} has no manifest", dir.display())));
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn csv_path(&self) -> PathBuf {
        self.root.join("runs.csv")
    }

    pub fn manifest(&self) -> Result<Manifest> {
        read_json(&self.manifest_path())
    }

    pub fn run_path(&self, key: &CellKey) -> PathBuf {
        self.runs_dir().join(format!("{}.json", key.file_stem()))
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.run_path(key).exists()
    }

    /// Writes a run record; existing records are never overwritten.
    pub fn append(&self, record: &RunRecord) -> Result<()> {
        let path = self.run_path(&record.key());
        if path.exists() {
            return Ok(());
        }
        write_json(&path, record)
    }

    /// Every record, ordered by key. Records whose config hash does not
    /// match the manifest are rejected.
    pub fn runs(&self) -> Result<Vec<RunRecord>> {
        let hash = self.manifest()?.config_hash;
        let dir = self.runs_dir();
        let mut runs = Vec::new();
        for entry in fs::read_dir(&dir).map_err(Error::io(&dir))? {
            let path = entry.map_err(Error::io(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let rec: RunRecord = read_json(&path)?;
                if rec.config_hash != hash {
                    return config_err(format!("{}: config hash {} does not match the manifest", path.display(), rec.config_hash));
                }
                runs.push(rec);
            }
        }
        runs.sort_by_key(RunRecord::key);
        Ok(runs)
    }

    /// Rebuilds `runs.csv` from the records on disk.
    ///
    /// Columns: experiment, sweep_param, sweep_value, mode, seed,
    /// first_hit_step, censored, total_steps, final_return, mean_return.
    pub fn write_summary(&self) -> Result<PathBuf> {
        let path = self.csv_path();
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "experiment", "sweep_param", "sweep_value", "mode", "seed", "first_hit_step", "censored", "total_steps",
            "final_return", "mean_return",
        ])?;
        for r in self.runs()? {
            let curve = &r.result.return_curve;
            let mean = if curve.is_empty() { 0.0 } else { curve.iter().sum::<f64>() / curve.len() as f64 };
            w.write_record([
                r.experiment_name.clone(),
                r.sweep_param.clone().unwrap_or_default(),
                r.sweep_value.map(|v| v.to_string()).unwrap_or_default(),
                r.mode.to_string(),
                r.seed.to_string(),
                r.result.first_hit_step.map(|v| v.to_string()).unwrap_or_default(),
                r.result.censored.to_string(),
                r.result.total_steps.to_string(),
                curve.last().copied().unwrap_or(0.0).to_string(),
                mean.to_string(),
            ])?;
        }
        w.flush().map_err(Error::io(&path))?;
        Ok(path)
    }
}

/// Pretty JSON written to a temporary file and renamed into place, so a
/// crash never leaves a half-written record behind.
fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, path).map_err(Error::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}
