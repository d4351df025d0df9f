//! Experiment description, loaded from TOML or JSON.
//!
//! ```toml
//! experiment_name = "island-eps"
//! seeds = [0, 1, 2]
//! output_dir = "out/island"
//!
//! [env]
//! kind = "island"
//! epsilon = 0.05
//!
//! [agent]
//! episodes = 50
//!
//! [sweep]
//! param = "env.epsilon"
//! values = [0.1, 0.05, 0.01]
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use relay_core::agent::{AgentConfig, Mode};
use relay_core::env::{IslandSpec, TabularMdp, Task, ThreeRingSpec};
use relay_core::rng::hash64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_name: String,
    pub env: EnvSpec,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_modes() -> Vec<Mode> {
    Mode::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Island {
        epsilon: f64,
        #[serde(default = "default_size_a")]
        size_a: usize,
        #[serde(default = "default_size_b")]
        size_b: usize,
    },
    Bottleneck {
        width: usize,
        height: usize,
        #[serde(default = "default_corridor")]
        corridor_width: usize,
    },
    ThreeRing(ThreeRingSpec),
    /// JSON file holding a [`CustomEnv`]. Relative paths are resolved against
    /// the directory of the config file.
    Custom { path: PathBuf },
}

fn default_size_a() -> usize {
    20
}

fn default_size_b() -> usize {
    10
}

fn default_corridor() -> usize {
    1
}

/// Explicit MDP: one successor list and one reward per `(state, action)`,
/// state-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomEnv {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub rewards: Vec<f64>,
    pub start: usize,
    pub goal: Vec<usize>,
    #[serde(default)]
    pub frontier: Vec<usize>,
}

impl EnvSpec {
    pub fn build(&self) -> Result<Task> {
        Ok(match self {
            EnvSpec::Island { epsilon, size_a, size_b } => {
                Task::island(&IslandSpec { epsilon: *epsilon, size_a: *size_a, size_b: *size_b })?
            }
            EnvSpec::Bottleneck { width, height, corridor_width } => Task::bottleneck(*width, *height, *corridor_width)?,
            EnvSpec::ThreeRing(spec) => Task::three_ring(spec)?,
            EnvSpec::Custom { path } => {
                let text = fs::read_to_string(path).map_err(Error::io(path))?;
                let c: CustomEnv = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let mdp = TabularMdp::new(c.n_states, c.n_actions, c.transitions, c.rewards, c.gamma)?;
                if c.start >= c.n_states || c.goal.iter().chain(&c.frontier).any(|&s| s >= c.n_states) {
                    return config_err(format!("{}: start, goal and frontier must be valid states", path.display()));
                }
                if c.goal.is_empty() {
                    return config_err(format!("{}: goal region is empty", path.display()));
                }
                Task { name: "custom".into(), mdp, start: c.start, goal: c.goal, frontier: c.frontier }
            }
        })
    }
}

/// One swept parameter, addressed by a dotted path into the config
/// (`env.epsilon`, `agent.generator.temperature`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
}

/// One point of the sweep grid; index 0 with no value when there is no sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub value: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut config: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let EnvSpec::Custom { path: env_path } = &mut config.env {
            if env_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *env_path = dir.join(&*env_path);
                }
            }
        }
        Ok(config)
    }

    /// Checks everything that can go wrong before a single run starts,
    /// including building the environment at every sweep point.
    pub fn validate(&self) -> Result<()> {
        if self.experiment_name.trim().is_empty() {
            return config_err("experiment_name is empty");
        }
        if self.seeds.is_empty() {
            return config_err("seed list is empty");
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return config_err("seeds must be distinct");
        }
        if self.modes.is_empty() || self.modes.iter().collect::<BTreeSet<_>>().len() != self.modes.len() {
            return config_err("modes must be a non-empty list without repeats");
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return config_err("sweep has no values");
            }
            if sweep.values.iter().any(|v| !v.is_finite()) {
                return config_err("sweep values must be finite");
            }
        }
        for point in self.points() {
            let c = self.at(point)?;
            c.agent.validate().map_err(|e| Error::Config(format!("agent: {e}")))?;
            c.env.build().map_err(|e| match e {
                Error::Core(e) => Error::Config(format!("env: {e}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        match &self.sweep {
            None => vec![SweepPoint { index: 0, value: None }],
            Some(s) => s.values.iter().enumerate().map(|(index, &v)| SweepPoint { index, value: Some(v) }).collect(),
        }
    }

    /// The config with the sweep value substituted at `point`.
    pub fn at(&self, point: SweepPoint) -> Result<Self> {
        let (Some(sweep), Some(value)) = (&self.sweep, point.value) else {
            return Ok(self.clone());
        };
        let mut tree = serde_json::to_value(self).expect("config serialises");
        let mut slot = &mut tree;
        for key in sweep.param.split('.') {
            slot = slot
                .get_mut(key)
                .ok_or_else(|| Error::Config(format!("sweep parameter `{}` does not exist", sweep.param)))?;
        }
        *slot = match slot {
            Value::Number(n) if n.is_u64() || n.is_i64() => {
                if value.fract() != 0.0 || value < 0.0 {
                    return config_err(format!("`{}` takes non-negative integers, got {value}", sweep.param));
                }
                Value::from(value as u64)
            }
            Value::Number(_) => Value::from(value),
            _ => return config_err(format!("sweep parameter `{}` is not numeric", sweep.param)),
        };
        let mut out: Self = serde_json::from_value(tree).map_err(|e| Error::Config(format!("sweep `{}`: {e}", sweep.param)))?;
        out.sweep = None;
        Ok(out)
    }

    /// Stable hash of everything that determines the numbers. The output
    /// directory is left out so a store can be moved or re-created elsewhere.
    pub fn hash(&self) -> u64 {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hash64(serde_json::to_string(&c).expect("config serialises").as_bytes())
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ISLAND: &str = r#"
        experiment_name = "isl"
        seeds = [0, 1, 2]
        [env]
        kind = "island"
        epsilon = 0.05
        [agent]
        episodes = 3
        [sweep]
        param = "env.epsilon"
        values = [0.1, 0.05, 0.01]
    "#;

    fn island() -> ExperimentConfig {
        toml::from_str(ISLAND).unwrap()
    }

    #[test]
    fn toml_round_trip() {
        let c = island();
        assert_eq!(c.agent.episodes, 3);
        assert_eq!(c.modes, Mode::ALL.to_vec());
        assert_eq!(c.output_dir, PathBuf::from("results"));
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), c);
    }

    #[test]
    fn sweep_substitutes_values() {
        let c = island();
        let pts = c.points();
        assert_eq!(pts.len(), 3);
        match c.at(pts[2]).unwrap().env {
            EnvSpec::Island { epsilon, .. } => assert_eq!(epsilon, 0.01),
            _ => unreachable!(),
        }
        let mut c2 = c.clone();
        c2.sweep = Some(Sweep { param: "agent.episodes".into(), values: vec![4.0] });
        assert_eq!(c2.at(c2.points()[0]).unwrap().agent.episodes, 4);
        c2.sweep = Some(Sweep { param: "agent.episodes".into(), values: vec![4.5] });
        assert!(c2.at(c2.points()[0]).is_err());
        c2.sweep = Some(Sweep { param: "env.nope".into(), values: vec![1.0] });
        assert!(c2.validate().is_err());
    }

    #[test]
    fn rejects_bad_seed_lists() {
        let mut c = island();
        c.seeds = vec![];
        assert!(c.validate().unwrap_err().is_config());
        c.seeds = vec![1, 1];
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn rejects_bad_env() {
        let mut c = island();
        c.sweep = None;
        c.env = EnvSpec::Island { epsilon: 2.0, size_a: 3, size_b: 3 };
        assert!(c.validate().unwrap_err().is_config());
        assert!(toml::from_str::<ExperimentConfig>("experiment_name='x'\nseeds=[1]\n[env]\nkind='moon'").is_err());
    }

    #[test]
    fn three_ring_fields_default() {
        let c: ExperimentConfig =
            toml::from_str("experiment_name='r'\nseeds=[1]\n[env]\nkind='three_ring'\ndrift_strength=2.0").unwrap();
        match c.env {
            EnvSpec::ThreeRing(s) => assert_eq!((s.drift_strength, s.grid_resolution), (2.0, 32)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = island();
        let h = a.hash();
        a.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), h);
        a.seeds.push(9);
        assert_ne!(a.hash(), h);
    }
}
