//! Tabular environments and trajectory machinery.
//!
//! Transition rows are stored sparsely: each `(s, a)` pair keeps the list of
//! successors with non-zero probability. All constructors validate row
//! stochasticity to 1e-12, so downstream solvers can rely on it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerance for row sums of transition tensors.
pub const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    gamma: f64,
    labels: Option<Vec<String>>,
}

impl TabularMdp {
    /// Builds an MDP from sparse rows indexed `s * n_actions + a`.
    ///
    /// Duplicate successors are merged and zero entries dropped.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<(usize, f64)>>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return invalid("an MDP needs at least one state and one action");
        }
        if rows.len() != n_states * n_actions || reward.len() != n_states * n_actions {
            return invalid(format!(
                "expected {} rows and rewards, got {} and {}",
                n_states * n_actions,
                rows.len(),
                reward.len()
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return invalid(format!("gamma must lie in (0,1), got {gamma}"));
        }
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            return invalid(format!("reward {i} is not finite"));
        }
        let mut clean = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            let mut sorted = row;
            sorted.sort_by_key(|&(s, _)| s);
            for (s, p) in sorted {
                if s >= n_states {
                    return invalid(format!("row {i} points at state {s} >= {n_states}"));
                }
                if !(p >= 0.0) || !p.is_finite() {
                    return invalid(format!("row {i} has invalid probability {p}"));
                }
                match merged.last_mut() {
                    Some(last) if last.0 == s => last.1 += p,
                    _ => merged.push((s, p)),
                }
            }
            merged.retain(|&(_, p)| p > 0.0);
            let sum: f64 = merged.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return invalid(format!(
                    "row (s={}, a={}) sums to {sum}",
                    i / n_actions,
                    i % n_actions
                ));
            }
            clean.push(merged);
        }
        Ok(Self { n_states, n_actions, rows: clean, reward, gamma, labels: None })
    }

    /// Builds an MDP from a dense `(s, a, s')` tensor in row-major order.
    pub fn from_dense(
        n_states: usize,
        n_actions: usize,
        transition: &[f64],
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if transition.len() != n_states * n_actions * n_states {
            return invalid("dense transition tensor has the wrong length");
        }
        let rows = transition
            .chunks(n_states)
            .map(|row| row.iter().copied().enumerate().filter(|&(_, p)| p != 0.0).collect())
            .collect();
        Self::new(n_states, n_actions, rows, reward, gamma)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_states {
            return invalid("one label per state is required");
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return invalid(format!("gamma must lie in (0,1), got {gamma}"));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// Subtracts a constant per-step cost from every reward.
    pub fn with_living_cost(mut self, cost: f64) -> Result<Self> {
        if !cost.is_finite() {
            return invalid("living cost must be finite");
        }
        for r in &mut self.reward {
            *r -= cost;
        }
        Ok(self)
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s * self.n_actions + a]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.successors(s, a)
            .iter()
            .find(|&&(t, _)| t == next)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn is_deterministic(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1)
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Expected value of `v` at the successor of `(s, a)`.
    #[inline]
    pub fn expect(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.successors(s, a).iter().map(|&(t, p)| p * v[t]).sum()
    }

    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_sparse(self.successors(s, a), rng)
    }

    /// Successor selected by inverse-CDF lookup of a uniform draw `u`.
    pub fn step_with(&self, s: usize, a: usize, u: f64) -> usize {
        let row = self.successors(s, a);
        let mut acc = 0.0;
        for &(t, p) in row {
            acc += p;
            if u < acc {
                return t;
            }
        }
        row.last().expect("rows are never empty").0
    }

    /// Dense `(s, a, s')` tensor, mainly for serialization and tests.
    pub fn dense_transition(&self) -> Vec<f64> {
        let n = self.n_states;
        let mut out = vec![0.0; n * self.n_actions * n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(t, p) in row {
                out[i * n + t] = p;
            }
        }
        out
    }
}

pub(crate) fn sample_sparse<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    if row.len() == 1 {
        return row[0].0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(t, p) in row {
        acc += p;
        if u < acc {
            return t;
        }
    }
    row.last().expect("rows are never empty").0
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Row-stochastic `state -> action` distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return invalid("policy table has the wrong shape");
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return invalid(format!("policy row {s} is not a distribution"));
            }
        }
        Ok(Self { n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    /// Deterministic policy from one action per state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { n_actions, probs }
    }

    /// Uniform over the actions whose score is within `tie` of the row maximum.
    pub fn greedy(n_actions: usize, scores: &[f64], tie: f64) -> Self {
        let mut probs = vec![0.0; scores.len()];
        for (row, out) in scores.chunks(n_actions).zip(probs.chunks_mut(n_actions)) {
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let winners = row.iter().filter(|&&q| q >= best - tie).count() as f64;
            for (q, p) in row.iter().zip(out.iter_mut()) {
                if *q >= best - tie {
                    *p = 1.0 / winners;
                }
            }
        }
        Self { n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.len() / self.n_actions
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn probs(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(self.probs(s), rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IslandSpec {
    pub epsilon: f64,
    pub size_a: usize,
    pub size_b: usize,
}

impl IslandSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return invalid(format!("epsilon must lie in (0,1], got {}", self.epsilon));
        }
        if self.size_a == 0 || self.size_b == 0 {
            return invalid("both island regions need at least one state");
        }
        Ok(())
    }

    /// States `0..size_a` form the mastered region.
    pub fn region_a(&self) -> std::ops::Range<usize> {
        0..self.size_a
    }

    pub fn region_b(&self) -> std::ops::Range<usize> {
        self.size_a..self.size_a + self.size_b
    }

    /// The only state of region A whose bridge action can reach region B.
    pub const BRIDGE_STATE: usize = 0;
    /// Action index of the bridge attempt (and of the return from B).
    pub const BRIDGE_ACTION: usize = 1;
}

/// Two clusters joined by a single `epsilon` bridge.
///
/// Action 0 relocates uniformly inside the current cluster. Action 1 is the
/// bridge attempt from state 0 (success with probability `epsilon`, else
/// stay); from any other state of A it is a no-op, and from B it returns to
/// a uniform state of A. Rewards are 0 in A and 1 in B.
pub fn build_island_mdp(spec: &IslandSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let (na, nb) = (spec.size_a, spec.size_b);
    let n = na + nb;
    let uniform = |range: std::ops::Range<usize>| -> Vec<(usize, f64)> {
        let w = 1.0 / range.len() as f64;
        range.map(|t| (t, w)).collect()
    };
    let mut rows = Vec::with_capacity(2 * n);
    let mut reward = Vec::with_capacity(2 * n);
    for s in 0..n {
        let in_b = s >= na;
        if in_b {
            rows.push(uniform(spec.region_b()));
            rows.push(uniform(spec.region_a()));
        } else {
            rows.push(uniform(spec.region_a()));
            if s == IslandSpec::BRIDGE_STATE {
                let mut bridge = vec![(na, spec.epsilon)];
                if spec.epsilon < 1.0 {
                    bridge.push((s, 1.0 - spec.epsilon));
                }
                rows.push(bridge);
            } else {
                rows.push(vec![(s, 1.0)]);
            }
        }
        let r = if in_b { 1.0 } else { 0.0 };
        reward.extend([r, r]);
    }
    let labels = (0..n)
        .map(|s| if s < na { format!("A{s}") } else { format!("B{}", s - na) })
        .collect();
    TabularMdp::new(n, 2, rows, reward, 0.95)?.with_labels(labels)
}

/// Four-neighbour moves: up, down, left, right.
const MOVES4: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Two `width x height` rooms separated by a one-cell wall column that has
/// `corridor_width` open cells centred vertically.
#[derive(Debug, Clone)]
pub struct BottleneckGrid {
    pub mdp: TabularMdp,
    pub width: usize,
    pub height: usize,
    pub corridor_width: usize,
    /// `(row, col)` of every state.
    pub cells: Vec<(usize, usize)>,
    pub goal: usize,
}

impl BottleneckGrid {
    pub fn new(width: usize, height: usize, corridor_width: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid("rooms need positive width and height");
        }
        if corridor_width == 0 {
            return invalid("corridor width must be at least one cell");
        }
        if corridor_width > height {
            return invalid(format!(
                "corridor width {corridor_width} exceeds wall height {height}"
            ));
        }
        let cols = 2 * width + 1;
        let first_open = (height - corridor_width) / 2;
        let open = |r: usize, c: usize| c != width || (first_open..first_open + corridor_width).contains(&r);
        let mut index = vec![usize::MAX; height * cols];
        let mut cells = Vec::new();
        for c in 0..cols {
            for r in 0..height {
                if open(r, c) {
                    index[r * cols + c] = cells.len();
                    cells.push((r, c));
                }
            }
        }
        let goal = index[(height - 1) * cols + cols - 1];
        let n = cells.len();
        let mut rows = Vec::with_capacity(n * 4);
        let mut reward = Vec::with_capacity(n * 4);
        for (s, &(r, c)) in cells.iter().enumerate() {
            for (dr, dc) in MOVES4 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                let target = if nr >= 0 && nc >= 0 && (nr as usize) < height && (nc as usize) < cols {
                    let t = index[nr as usize * cols + nc as usize];
                    if t == usize::MAX { s } else { t }
                } else {
                    s
                };
                rows.push(vec![(target, 1.0)]);
                reward.push(if s == goal { 1.0 } else { 0.0 });
            }
        }
        let labels = cells.iter().map(|(r, c)| format!("r{r}c{c}")).collect();
        let mdp = TabularMdp::new(n, 4, rows, reward, 0.95)?.with_labels(labels)?;
        Ok(Self { mdp, width, height, corridor_width, cells, goal })
    }

    /// States of the left room.
    pub fn room_a(&self) -> Vec<usize> {
        self.states_where(|c| c < self.width)
    }

    /// States of the right room.
    pub fn room_b(&self) -> Vec<usize> {
        self.states_where(|c| c > self.width)
    }

    /// Corridor cells in the wall column.
    pub fn corridor(&self) -> Vec<usize> {
        self.states_where(|c| c == self.width)
    }

    /// Column cuts `{col <= k}` for every interior `k`; the natural cut family.
    pub fn column_cuts(&self) -> Vec<Vec<usize>> {
        (0..2 * self.width).map(|k| self.states_where(|c| c <= k)).collect()
    }

    /// Room-A cells adjacent to the corridor.
    pub fn corridor_mouth(&self) -> Vec<usize> {
        let corridor_rows: Vec<usize> = self.corridor().iter().map(|&s| self.cells[s].0).collect();
        self.cells
            .iter()
            .enumerate()
            .filter(|&(_, &(r, c))| c + 1 == self.width && corridor_rows.contains(&r))
            .map(|(s, _)| s)
            .collect()
    }

    fn states_where(&self, f: impl Fn(usize) -> bool) -> Vec<usize> {
        self.cells.iter().enumerate().filter(|(_, &(_, c))| f(c)).map(|(s, _)| s).collect()
    }
}

pub fn build_bottleneck_grid(width: usize, height: usize, corridor_width: usize) -> Result<TabularMdp> {
    BottleneckGrid::new(width, height, corridor_width).map(|g| g.mdp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreeRingSpec {
    pub grid_resolution: usize,
    /// Ring radii in units of the half-width of the square domain.
    pub ring_radii: [f64; 3],
    /// Drift probability per step is `1 - exp(-drift_strength)`.
    pub drift_strength: f64,
    pub ring_rewards: [f64; 3],
}

impl Default for ThreeRingSpec {
    fn default() -> Self {
        Self {
            grid_resolution: 32,
            ring_radii: [0.2, 0.5, 0.8],
            drift_strength: 1.0,
            ring_rewards: [1.0, 2.0, 3.0],
        }
    }
}

impl ThreeRingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < 16 {
            return invalid(format!("grid resolution must be >= 16, got {}", self.grid_resolution));
        }
        let r = self.ring_radii;
        if !(r[0] > 0.0 && r[0] < r[1] && r[1] < r[2]) || r.iter().any(|x| !x.is_finite()) {
            return invalid("ring radii must be positive and strictly increasing");
        }
        let w = self.ring_rewards;
        if !(w[0] < w[1] && w[1] < w[2]) || w.iter().any(|x| !x.is_finite()) {
            return invalid("ring rewards must be strictly increasing");
        }
        if !(self.drift_strength >= 0.0) || !self.drift_strength.is_finite() {
            return invalid("drift strength must be a finite non-negative number");
        }
        Ok(())
    }

    pub fn drift_probability(&self) -> f64 {
        1.0 - (-self.drift_strength).exp()
    }

    pub fn cell_size(&self) -> f64 {
        2.0 / self.grid_resolution as f64
    }
}

/// Eight neighbour moves followed by "stay".
pub const MOVES9: [(i64, i64); 9] = [
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
    (0, 0),
];

/// Discretised three-ring manifold with geometry attached.
#[derive(Debug, Clone)]
pub struct ThreeRing {
    pub mdp: TabularMdp,
    pub spec: ThreeRingSpec,
    /// Ring index whose band contains each state, if any.
    pub band: Vec<Option<usize>>,
    /// Distance of each cell centre from the origin.
    pub radius: Vec<f64>,
}

impl ThreeRing {
    pub fn new(spec: &ThreeRingSpec) -> Result<Self> {
        spec.validate()?;
        let res = spec.grid_resolution;
        let n = res * res;
        let cell = spec.cell_size();
        let centre = |i: usize| (i as f64 + 0.5) * cell - 1.0;
        let mut radius = Vec::with_capacity(n);
        let mut band = Vec::with_capacity(n);
        for row in 0..res {
            for col in 0..res {
                let (x, y) = (centre(col), centre(row));
                let r = x.hypot(y);
                radius.push(r);
                // Outer rings win where bands overlap.
                band.push((0..3).rev().find(|&k| (r - spec.ring_radii[k]).abs() <= cell));
            }
        }
        let p_drift = spec.drift_probability();
        let mut rows = Vec::with_capacity(n * 9);
        let mut reward = Vec::with_capacity(n * 9);
        for s in 0..n {
            let (row, col) = (s / res, s % res);
            let r = band[s].map_or(0.0, |k| spec.ring_rewards[k]);
            for (dr, dc) in MOVES9 {
                let (nr, nc) = (row as i64 + dr, col as i64 + dc);
                let landed = if nr >= 0 && nc >= 0 && (nr as usize) < res && (nc as usize) < res {
                    nr as usize * res + nc as usize
                } else {
                    s
                };
                let mut out = vec![(landed, 1.0 - p_drift)];
                let drifted = drift_target(landed, res, cell, &radius, &spec.ring_radii);
                out.push((drifted, p_drift));
                rows.push(out);
                reward.push(r);
            }
        }
        let labels = (0..n).map(|s| format!("r{}c{}", s / res, s % res)).collect();
        let mdp = TabularMdp::new(n, 9, rows, reward, 0.95)?.with_labels(labels)?;
        Ok(Self { mdp, spec: spec.clone(), band, radius })
    }

    pub fn ring_states(&self, ring: usize) -> Vec<usize> {
        (0..self.band.len()).filter(|&s| self.band[s] == Some(ring)).collect()
    }

    /// Cell on ring `ring` along the positive x axis.
    pub fn ring_start(&self, ring: usize) -> usize {
        let res = self.spec.grid_resolution;
        let row = res / 2;
        (res / 2..res)
            .map(|col| row * res + col)
            .min_by(|&a, &b| {
                let da = (self.radius[a] - self.spec.ring_radii[ring]).abs();
                let db = (self.radius[b] - self.spec.ring_radii[ring]).abs();
                da.total_cmp(&db)
            })
            .expect("grid is non-empty")
    }

    /// Cells halfway between ring `ring` and the next one.
    pub fn watershed(&self, ring: usize) -> Vec<usize> {
        let mid = 0.5 * (self.spec.ring_radii[ring] + self.spec.ring_radii[ring + 1]);
        let cell = self.spec.cell_size();
        (0..self.radius.len()).filter(|&s| (self.radius[s] - mid).abs() <= 0.5 * cell).collect()
    }
}

/// One-cell radial step toward the nearest ring radius, or `s` itself when
/// the cell already sits within half a cell of that radius.
fn drift_target(s: usize, res: usize, cell: f64, radius: &[f64], radii: &[f64; 3]) -> usize {
    let r = radius[s];
    let nearest = radii
        .iter()
        .copied()
        .min_by(|a, b| (r - a).abs().total_cmp(&(r - b).abs()))
        .expect("three radii");
    if (r - nearest).abs() <= 0.5 * cell || r < 1e-12 {
        return s;
    }
    let (row, col) = (s / res, s % res);
    let x = (col as f64 + 0.5) * cell - 1.0;
    let y = (row as f64 + 0.5) * cell - 1.0;
    let sign = if nearest > r { 1.0 } else { -1.0 };
    let (ux, uy) = (sign * x / r, sign * y / r);
    // Snap the radial direction to the closest of the eight compass moves.
    let angle = uy.atan2(ux);
    let octant = (angle / std::f64::consts::FRAC_PI_4).round();
    let (dx, dy) = (octant * std::f64::consts::FRAC_PI_4).sin_cos();
    let (dc, dr) = (dy.round() as i64, dx.round() as i64);
    let (nr, nc) = (row as i64 + dr, col as i64 + dc);
    if nr >= 0 && nc >= 0 && (nr as usize) < res && (nc as usize) < res {
        nr as usize * res + nc as usize
    } else {
        s
    }
}

pub fn build_three_ring(spec: &ThreeRingSpec) -> Result<TabularMdp> {
    ThreeRing::new(spec).map(|t| t.mdp)
}

/// An environment together with where episodes start and what counts as the
/// goal region for first-hit measurements.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub mdp: TabularMdp,
    pub start: usize,
    pub goal: Vec<usize>,
    /// States one step upstream of the goal region, used as jump anchors.
    pub frontier: Vec<usize>,
}

impl Task {
    pub fn island(spec: &IslandSpec) -> Result<Self> {
        let mdp = build_island_mdp(spec)?;
        let start = spec.size_a.saturating_sub(1);
        Ok(Self {
            name: format!("island(eps={})", spec.epsilon),
            mdp,
            start,
            goal: spec.region_b().collect(),
            frontier: vec![IslandSpec::BRIDGE_STATE],
        })
    }

    pub fn bottleneck(width: usize, height: usize, corridor_width: usize) -> Result<Self> {
        let g = BottleneckGrid::new(width, height, corridor_width)?;
        Ok(Self {
            name: format!("bottleneck({width}x{height},c={corridor_width})"),
            start: 0,
            goal: g.room_b(),
            frontier: g.corridor_mouth(),
            mdp: g.mdp,
        })
    }

    /// Starts on the inner ring; the goal is the band of the middle ring.
    pub fn three_ring(spec: &ThreeRingSpec) -> Result<Self> {
        let t = ThreeRing::new(spec)?;
        Ok(Self {
            name: "three_ring".into(),
            start: t.ring_start(0),
            goal: t.ring_states(1),
            frontier: t.watershed(0),
            mdp: t.mdp,
        })
    }

    pub fn in_goal(&self) -> Vec<bool> {
        let mut mask = vec![false; self.mdp.n_states()];
        for &g in &self.goal {
            mask[g] = true;
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn start(s: usize) -> Self {
        Self { states: vec![s], actions: Vec::new(), rewards: Vec::new() }
    }

    pub fn push(&mut self, action: usize, reward: f64, next: usize) {
        self.actions.push(action);
        self.rewards.push(reward);
        self.states.push(next);
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len()).map(|t| Transition {
            state: self.states[t],
            action: self.actions[t],
            reward: self.rewards[t],
            next: self.states[t + 1],
        })
    }
}

/// Samples exactly `horizon` transitions from `start`.
pub fn rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start: usize,
    horizon: usize,
    rng: &mut R,
) -> Trajectory {
    let mut traj = Trajectory::start(start);
    let mut s = start;
    for _ in 0..horizon {
        let a = policy.sample(s, rng);
        let next = mdp.step(s, a, rng);
        traj.push(a, mdp.reward(s, a), next);
        s = next;
    }
    traj
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
}

/// Replay buffer with per-state visit counts of transition sources.
#[derive(Debug, Clone, Default)]
pub struct Buffer {
    transitions: Vec<Transition>,
    visit_counts: Vec<u64>,
}

impl Buffer {
    pub fn new(n_states: usize) -> Self {
        Self { transitions: Vec::new(), visit_counts: vec![0; n_states] }
    }

    pub fn push(&mut self, t: Transition) {
        self.visit_counts[t.state] += 1;
        self.transitions.push(t);
    }

    pub fn extend_from(&mut self, traj: &Trajectory) {
        for t in traj.transitions() {
            self.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    /// Empirical occupancy of transition sources.
    pub fn occupancy(&self) -> Vec<f64> {
        let total = self.transitions.len().max(1) as f64;
        self.visit_counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Source state of a uniformly drawn stored transition.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.transitions.is_empty() {
            return None;
        }
        Some(self.transitions[rng.random_range(0..self.transitions.len())].state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = TabularMdp::new(1, 1, vec![vec![(0, 0.5)]], vec![0.0], 0.9);
        assert!(err.is_err());
        let err = TabularMdp::new(1, 1, vec![vec![(0, 1.0)]], vec![0.0], 1.0);
        assert!(err.is_err());
        let err = TabularMdp::new(1, 1, vec![vec![(0, 1.0)]], vec![f64::NAN], 0.5);
        assert!(err.is_err());
    }

    #[test]
    fn island_degenerate_chain() {
        let mdp = build_island_mdp(&IslandSpec { epsilon: 1.0, size_a: 1, size_b: 1 }).unwrap();
        assert!(mdp.is_deterministic());
        assert_eq!(mdp.successors(0, IslandSpec::BRIDGE_ACTION), &[(1, 1.0)]);
        assert!(mdp.max_row_error() < ROW_TOL);
    }

    #[test]
    fn island_bridge_probability_is_exact() {
        for eps in [0.1, 0.05, 0.01] {
            let spec = IslandSpec { epsilon: eps, size_a: 10, size_b: 5 };
            let mdp = build_island_mdp(&spec).unwrap();
            assert_eq!(mdp.prob(0, IslandSpec::BRIDGE_ACTION, spec.size_a), eps);
            // No other A state reaches B.
            for s in 1..spec.size_a {
                for a in 0..2 {
                    assert!(mdp.successors(s, a).iter().all(|&(t, _)| t < spec.size_a));
                }
            }
        }
    }

    #[test]
    fn island_rejects_bad_spec() {
        assert!(build_island_mdp(&IslandSpec { epsilon: 0.0, size_a: 1, size_b: 1 }).is_err());
        assert!(build_island_mdp(&IslandSpec { epsilon: 0.5, size_a: 0, size_b: 1 }).is_err());
    }

    #[test]
    fn bottleneck_shape() {
        let g = BottleneckGrid::new(8, 8, 1).unwrap();
        assert_eq!(g.mdp.n_states(), 2 * 64 + 1);
        assert_eq!(g.corridor().len(), 1);
        assert_eq!(g.corridor_mouth().len(), 1);
        assert!(BottleneckGrid::new(8, 4, 5).is_err());
        let open = BottleneckGrid::new(3, 4, 4).unwrap();
        assert_eq!(open.mdp.n_states(), 7 * 4);
    }

    #[test]
    fn three_ring_validation() {
        let mut spec = ThreeRingSpec::default();
        spec.grid_resolution = 8;
        assert!(ThreeRing::new(&spec).is_err());
        let mut spec = ThreeRingSpec::default();
        spec.ring_radii = [0.5, 0.4, 0.8];
        assert!(ThreeRing::new(&spec).is_err());
        let mut spec = ThreeRingSpec::default();
        spec.ring_rewards = [1.0, 1.0, 3.0];
        assert!(ThreeRing::new(&spec).is_err());
    }

    #[test]
    fn three_ring_rows_and_bands() {
        let t = ThreeRing::new(&ThreeRingSpec::default()).unwrap();
        assert!(t.mdp.max_row_error() < ROW_TOL);
        for k in 0..3 {
            assert!(!t.ring_states(k).is_empty());
        }
        assert_eq!(t.band[t.ring_start(0)], Some(0));
        assert!(!t.watershed(0).is_empty());
    }

    #[test]
    fn empty_rollout_keeps_start() {
        let mdp = build_island_mdp(&IslandSpec { epsilon: 0.5, size_a: 3, size_b: 2 }).unwrap();
        let pi = StochasticPolicy::uniform(5, 2);
        let t = rollout(&mdp, &pi, 2, 0, &mut seeded(1));
        assert_eq!(t.states, vec![2]);
        assert!(t.is_empty());
    }

    #[test]
    fn deterministic_rollout_ignores_seed() {
        let g = BottleneckGrid::new(3, 3, 1).unwrap();
        let pi = StochasticPolicy::deterministic(4, &vec![3; g.mdp.n_states()]);
        let a = rollout(&g.mdp, &pi, 0, 20, &mut seeded(1));
        let b = rollout(&g.mdp, &pi, 0, 20, &mut seeded(99));
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert_eq!(a.states.len(), a.rewards.len() + 1);
    }

    #[test]
    fn stochastic_rollout_replays_with_seed() {
        let t = ThreeRing::new(&ThreeRingSpec::default()).unwrap();
        let pi = StochasticPolicy::uniform(t.mdp.n_states(), 9);
        let a = rollout(&t.mdp, &pi, 100, 200, &mut seeded(5));
        let b = rollout(&t.mdp, &pi, 100, 200, &mut seeded(5));
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn buffer_counts_match_transitions() {
        let mdp = build_island_mdp(&IslandSpec { epsilon: 0.5, size_a: 3, size_b: 2 }).unwrap();
        let pi = StochasticPolicy::uniform(5, 2);
        let traj = rollout(&mdp, &pi, 0, 50, &mut seeded(3));
        let mut buf = Buffer::new(5);
        buf.extend_from(&traj);
        let mut counts = vec![0u64; 5];
        for t in buf.transitions() {
            counts[t.state] += 1;
        }
        assert_eq!(counts, buf.visit_counts());
        assert!((buf.occupancy().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn living_cost_shifts_rewards() {
        let mdp = build_bottleneck_grid(2, 2, 1).unwrap().with_living_cost(0.01).unwrap();
        assert!(mdp.rewards().iter().all(|&r| r == -0.01 || (r - 0.99).abs() < 1e-12));
    }
}
