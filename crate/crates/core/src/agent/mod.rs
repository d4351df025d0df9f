//! Anchor generator, relay hindsight updates and the Dyna-style training loop.
//!
//! Two modes share everything except where imagined rollouts start:
//! [`Mode::Generator`] draws start states from a learned anchor distribution
//! scored by relay potentials, [`Mode::Baseline`] replays states from the
//! buffer.

mod generator;
mod her;
mod train;
mod world_model;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use generator::{
    contrastive_loss, contrastive_update, expected_contrastive_update, manifold_loss, psi_row, psi_score, sample_anchor, AnchorGenerator,
    ElitePool, GeneratorParams,
};
pub use her::{relay_her_update, targets_soft_update, TargetSchedule};
pub use train::train;
pub use world_model::WorldModelCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Generator,
    Baseline,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Generator, Mode::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Generator => "generator",
            Mode::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the relay score source state comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceChoice {
    /// The agent's real state at the start of the episode.
    #[default]
    Current,
    /// A state drawn from the replay buffer for every generator update.
    Buffer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Imagined rollout length `H`; zero disables imagination.
    pub imagination_horizon: usize,
    /// Relay horizon `k` for hindsight pairs.
    pub relay_horizon: usize,
    pub target_update_period: usize,
    pub target_update_fraction: f64,
    /// Generator updates per world-model update (one per episode).
    pub generator_update_ratio: usize,
    pub episodes: usize,
    pub seed: u64,
    pub episode_length: usize,
    pub rollouts_per_episode: usize,
    /// Exploration rate in the real environment.
    pub epsilon: f64,
    /// Exploration rate inside imagined rollouts.
    pub imagination_epsilon: f64,
    pub q_step: f64,
    /// Weight of an optional information-gain bonus added to Q targets.
    /// Off by default: epistemic value reaches the agent only through the
    /// generator's relay scores.
    pub intrinsic_weight: f64,
    pub pseudocount: f64,
    /// World model is handed the reward table and learns only transitions.
    pub known_rewards: bool,
    pub her_step: f64,
    /// Buffer negatives per contrastive update (the elite pool is added on top).
    pub negatives: usize,
    pub elite_capacity: usize,
    pub source: SourceChoice,
    pub generator: GeneratorParams,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            imagination_horizon: 15,
            relay_horizon: 8,
            target_update_period: 5,
            target_update_fraction: 0.5,
            generator_update_ratio: 4,
            episodes: 100,
            seed: 0,
            episode_length: 100,
            rollouts_per_episode: 20,
            epsilon: 0.1,
            imagination_epsilon: 0.2,
            q_step: 0.5,
            intrinsic_weight: 0.0,
            pseudocount: 0.1,
            known_rewards: true,
            her_step: 0.5,
            negatives: 16,
            elite_capacity: ElitePool::DEFAULT_CAPACITY,
            source: SourceChoice::Current,
            generator: GeneratorParams::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.relay_horizon == 0 {
            return invalid("relay horizon must be at least one");
        }
        if self.generator_update_ratio == 0 {
            return invalid("generator update ratio must be at least one");
        }
        if self.target_update_period == 0 {
            return invalid("target update period must be at least one");
        }
        if !(self.target_update_fraction > 0.0 && self.target_update_fraction <= 1.0) {
            return invalid("target update fraction must lie in (0,1]");
        }
        for (name, x) in [("epsilon", self.epsilon), ("imagination_epsilon", self.imagination_epsilon)] {
            if !(0.0..=1.0).contains(&x) {
                return invalid(format!("{name} must lie in [0,1], got {x}"));
            }
        }
        for (name, x) in [("q_step", self.q_step), ("her_step", self.her_step)] {
            if !(x > 0.0 && x <= 1.0) {
                return invalid(format!("{name} must lie in (0,1], got {x}"));
            }
        }
        if !(self.intrinsic_weight >= 0.0 && self.intrinsic_weight.is_finite()) {
            return invalid("intrinsic weight must be finite and non-negative");
        }
        if !(self.pseudocount > 0.0 && self.pseudocount.is_finite()) {
            return invalid("pseudocount must be positive");
        }
        if self.episode_length == 0 {
            return invalid("episodes need at least one step");
        }
        if self.negatives == 0 {
            return invalid("at least one buffer negative is required");
        }
        AnchorGenerator::new(1, self.generator).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    /// Real environment steps until the goal region was first entered.
    pub first_hit_step: Option<u64>,
    pub censored: bool,
    pub total_steps: u64,
    /// Undiscounted extrinsic return of every real episode.
    pub return_curve: Vec<f64>,
    /// Imagination start states drawn in each episode.
    pub anchor_history: Vec<Vec<usize>>,
    pub metric_series: BTreeMap<String, Vec<f64>>,
}

impl RunResult {
    /// First-hit step with censored runs counted as the full budget.
    pub fn hit_or_budget(&self) -> u64 {
        self.first_hit_step.unwrap_or(self.total_steps)
    }
}
