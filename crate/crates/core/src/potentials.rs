//! Value, uncertainty and relay potential fields.
//!
//! A relay column for anchor `g` is the optimal value of the MDP in which `g`
//! is made absorbing with terminal payoff `v_phi(g)`. Paths that never reach
//! `g` keep collecting ordinary rewards, so the column is a first-hitting-time
//! quantity rather than a fixed-horizon one.

use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{StochasticPolicy, TabularMdp};
use crate::error::{invalid, Error, Result};

pub const MAX_SWEEPS: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Per `(state, action)` non-negative epistemic shocks.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoField {
    n_actions: usize,
    shocks: Vec<f64>,
}

impl InfoField {
    pub fn new(n_states: usize, n_actions: usize, shocks: Vec<f64>) -> Result<Self> {
        if shocks.len() != n_states * n_actions {
            return invalid("info field has the wrong shape");
        }
        if let Some(x) = shocks.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return invalid(format!("info shocks must be finite and non-negative, got {x}"));
        }
        Ok(Self { n_actions, shocks })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, shocks: vec![0.0; n_states * n_actions] }
    }

    pub fn constant(n_states: usize, n_actions: usize, value: f64) -> Result<Self> {
        Self::new(n_states, n_actions, vec![value; n_states * n_actions])
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.shocks[s * self.n_actions + a]
    }

    pub fn shocks(&self) -> &[f64] {
        &self.shocks
    }

    pub fn max(&self) -> f64 {
        self.shocks.iter().copied().fold(0.0, f64::max)
    }

    fn check(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_actions != mdp.n_actions() || self.shocks.len() != mdp.n_states() * mdp.n_actions() {
            return invalid("info field does not match the MDP");
        }
        Ok(())
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates `step` from `init` until successive iterates differ by at most `tol`.
fn iterate(init: Vec<f64>, tol: f64, mut step: impl FnMut(&[f64], &mut [f64])) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let mut cur = init;
    let mut next = vec![0.0; cur.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        step(&cur, &mut next);
        residual = sup_diff(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        if residual <= tol {
            return Ok(cur);
        }
    }
    Err(Error::NonConvergence { iterations: MAX_SWEEPS, residual })
}

#[inline]
fn bellman_max(mdp: &TabularMdp, s: usize, v: &[f64]) -> f64 {
    let g = mdp.gamma();
    (0..mdp.n_actions())
        .map(|a| mdp.reward(s, a) + g * mdp.expect(s, a, v))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Optimal Bellman operator applied once.
pub fn bellman_optimality(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    (0..mdp.n_states()).map(|s| bellman_max(mdp, s, v)).collect()
}

/// Synchronous value iteration to a Bellman residual of at most `tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<Vec<f64>> {
    iterate(vec![0.0; mdp.n_states()], tol, |v, out| {
        for (s, o) in out.iter_mut().enumerate() {
            *o = bellman_max(mdp, s, v);
        }
    })
}

/// `Q(s, a) = r(s, a) + gamma * E[v(s')]`, flattened `s * A + a`.
pub fn q_values(mdp: &TabularMdp, v: &[f64]) -> Vec<f64> {
    let g = mdp.gamma();
    (0..mdp.n_states())
        .flat_map(|s| (0..mdp.n_actions()).map(move |a| (s, a)))
        .map(|(s, a)| mdp.reward(s, a) + g * mdp.expect(s, a, v))
        .collect()
}

/// Policy that uniformly mixes the actions greedy with respect to `v`.
pub fn greedy_policy(mdp: &TabularMdp, v: &[f64]) -> StochasticPolicy {
    StochasticPolicy::greedy(mdp.n_actions(), &q_values(mdp, v), 1e-9)
}

/// Which policy the uncertainty recursion is evaluated under.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    #[default]
    GreedyOptimal,
    Uniform,
}

impl EvalPolicy {
    pub fn resolve(self, mdp: &TabularMdp, tol: f64) -> Result<StochasticPolicy> {
        match self {
            EvalPolicy::Uniform => Ok(StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions())),
            EvalPolicy::GreedyOptimal => Ok(greedy_policy(mdp, &value_iteration(mdp, tol)?)),
        }
    }
}

#[inline]
fn policy_backup(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    info: &InfoField,
    discount: f64,
    s: usize,
    u: &[f64],
) -> f64 {
    policy
        .probs(s)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(a, &p)| p * (info.get(s, a) + discount * mdp.expect(s, a, u)))
        .sum()
}

/// Fixed point of `U(s) = E_pi[I(s,a) + discount * U(s')]`.
///
/// `discount` is normally `gamma^2`; passing `gamma` gives the naive variant
/// used for comparison.
pub fn uncertainty_value_iteration_with(
    mdp: &TabularMdp,
    info: &InfoField,
    policy: &StochasticPolicy,
    discount: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    info.check(mdp)?;
    if !(0.0..1.0).contains(&discount) {
        return invalid(format!("discount must lie in [0,1), got {discount}"));
    }
    iterate(vec![0.0; mdp.n_states()], tol, |u, out| {
        for (s, o) in out.iter_mut().enumerate() {
            *o = policy_backup(mdp, policy, info, discount, s, u);
        }
    })
}

/// Uncertainty field under the greedy-optimal policy with discount `gamma^2`.
pub fn uncertainty_value_iteration(mdp: &TabularMdp, info: &InfoField, tol: f64) -> Result<Vec<f64>> {
    let policy = EvalPolicy::GreedyOptimal.resolve(mdp, tol)?;
    let g = mdp.gamma();
    uncertainty_value_iteration_with(mdp, info, &policy, g * g, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelayKind {
    Pragmatic,
    Epistemic,
}

impl fmt::Display for RelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelayKind::Pragmatic => "pragmatic",
            RelayKind::Epistemic => "epistemic",
        })
    }
}

/// Square table of relay potentials, `entries[source * n + anchor]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayTable {
    n: usize,
    entries: Vec<f64>,
    kind: RelayKind,
}

impl RelayTable {
    pub fn new(n: usize, kind: RelayKind, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return invalid(format!("relay table needs {} entries, got {}", n * n, entries.len()));
        }
        Ok(Self { n, entries, kind })
    }

    pub fn filled(n: usize, kind: RelayKind, value: f64) -> Self {
        Self { n, entries: vec![value; n * n], kind }
    }

    /// Assembles a table from per-anchor columns.
    pub fn from_columns(kind: RelayKind, columns: &[Vec<f64>]) -> Self {
        let n = columns.len();
        let mut entries = vec![0.0; n * n];
        for (anchor, col) in columns.iter().enumerate() {
            for (s, &x) in col.iter().enumerate() {
                entries[s * n + anchor] = x;
            }
        }
        Self { n, entries, kind }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> RelayKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, source: usize, anchor: usize) -> f64 {
        self.entries[source * self.n + anchor]
    }

    #[inline]
    pub fn set(&mut self, source: usize, anchor: usize, value: f64) {
        self.entries[source * self.n + anchor] = value;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, source: usize) -> &[f64] {
        &self.entries[source * self.n..(source + 1) * self.n]
    }

    pub fn column(&self, anchor: usize) -> Vec<f64> {
        (0..self.n).map(|s| self.get(s, anchor)).collect()
    }

    pub fn sup_distance(&self, other: &RelayTable) -> f64 {
        sup_diff(&self.entries, &other.entries)
    }

    /// CSV with a `source` column followed by one column per anchor index.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["source".to_string()];
        header.extend((0..self.n).map(|a| a.to_string()));
        out.write_record(&header)?;
        for s in 0..self.n {
            let mut rec = vec![s.to_string()];
            rec.extend(self.row(s).iter().map(|x| format!("{x:?}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, kind: RelayKind) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let n = rdr.headers()?.len().saturating_sub(1);
        let mut entries = Vec::with_capacity(n * n);
        for rec in rdr.records() {
            let rec = rec?;
            for field in rec.iter().skip(1) {
                entries.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::Validation(format!("bad relay entry {field:?}: {e}")))?,
                );
            }
        }
        Self::new(n, kind, entries)
    }
}

/// Relay value column for `anchor` with an explicit terminal payoff.
pub fn relay_value_column(mdp: &TabularMdp, anchor: usize, terminal: f64, tol: f64) -> Result<Vec<f64>> {
    relay_value_column_from(mdp, anchor, terminal, vec![0.0; mdp.n_states()], tol)
}

/// As [`relay_value_column`] but starting the iteration from `init`.
pub fn relay_value_column_from(
    mdp: &TabularMdp,
    anchor: usize,
    terminal: f64,
    init: Vec<f64>,
    tol: f64,
) -> Result<Vec<f64>> {
    if anchor >= mdp.n_states() {
        return invalid(format!("anchor {anchor} out of range"));
    }
    if init.len() != mdp.n_states() {
        return invalid("initial column has the wrong length");
    }
    iterate(init, tol, |w, out| {
        for (s, o) in out.iter_mut().enumerate() {
            *o = if s == anchor { terminal } else { bellman_max(mdp, s, w) };
        }
    })
}

/// Fixed point of the pragmatic relay operator for one anchor.
pub fn relay_value_fixed_point(mdp: &TabularMdp, v_phi: &[f64], anchor: usize, tol: f64) -> Result<Vec<f64>> {
    check_field(mdp, v_phi)?;
    relay_value_column(mdp, anchor, *v_phi.get(anchor).unwrap_or(&0.0), tol)
}

/// Fixed point of the epistemic relay operator for one anchor.
pub fn relay_uncertainty_fixed_point(
    mdp: &TabularMdp,
    info: &InfoField,
    u: &[f64],
    policy: &StochasticPolicy,
    anchor: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    info.check(mdp)?;
    check_field(mdp, u)?;
    if anchor >= mdp.n_states() {
        return invalid(format!("anchor {anchor} out of range"));
    }
    let d = mdp.gamma() * mdp.gamma();
    iterate(vec![0.0; mdp.n_states()], tol, |w, out| {
        for (s, o) in out.iter_mut().enumerate() {
            *o = if s == anchor { u[anchor] } else { policy_backup(mdp, policy, info, d, s, w) };
        }
    })
}

/// Full pragmatic relay table, one anchor per column, computed in parallel.
pub fn relay_value_table(mdp: &TabularMdp, v_phi: &[f64], tol: f64) -> Result<RelayTable> {
    check_field(mdp, v_phi)?;
    let cols = (0..mdp.n_states())
        .into_par_iter()
        .map(|g| relay_value_column(mdp, g, v_phi[g], tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(RelayTable::from_columns(RelayKind::Pragmatic, &cols))
}

pub fn relay_uncertainty_table(
    mdp: &TabularMdp,
    info: &InfoField,
    u: &[f64],
    policy: &StochasticPolicy,
    tol: f64,
) -> Result<RelayTable> {
    let cols = (0..mdp.n_states())
        .into_par_iter()
        .map(|g| relay_uncertainty_fixed_point(mdp, info, u, policy, g, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(RelayTable::from_columns(RelayKind::Epistemic, &cols))
}

/// One application of the pragmatic relay operator to a whole table.
pub fn relay_value_operator(mdp: &TabularMdp, v_phi: &[f64], table: &RelayTable) -> RelayTable {
    let n = mdp.n_states();
    let g = mdp.gamma();
    let mut out = RelayTable::filled(n, RelayKind::Pragmatic, 0.0);
    let mut col = vec![0.0; n];
    for anchor in 0..n {
        for (s, c) in col.iter_mut().enumerate() {
            *c = table.get(s, anchor);
        }
        for s in 0..n {
            let x = if s == anchor {
                v_phi[anchor]
            } else {
                (0..mdp.n_actions())
                    .map(|a| mdp.reward(s, a) + g * mdp.expect(s, a, &col))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            out.set(s, anchor, x);
        }
    }
    out
}

/// One application of the epistemic relay operator (discount `gamma^2`).
pub fn relay_uncertainty_operator(
    mdp: &TabularMdp,
    info: &InfoField,
    u: &[f64],
    policy: &StochasticPolicy,
    table: &RelayTable,
) -> RelayTable {
    let n = mdp.n_states();
    let d = mdp.gamma() * mdp.gamma();
    let mut out = RelayTable::filled(n, RelayKind::Epistemic, 0.0);
    let mut col = vec![0.0; n];
    for anchor in 0..n {
        for (s, c) in col.iter_mut().enumerate() {
            *c = table.get(s, anchor);
        }
        for s in 0..n {
            let x = if s == anchor { u[anchor] } else { policy_backup(mdp, policy, info, d, s, &col) };
            out.set(s, anchor, x);
        }
    }
    out
}

fn check_field(mdp: &TabularMdp, v: &[f64]) -> Result<()> {
    if v.len() != mdp.n_states() {
        return invalid(format!("field has {} entries for {} states", v.len(), mdp.n_states()));
    }
    Ok(())
}

/// Largest `n_states * max_k` the brute-force oracle accepts.
pub const ORACLE_BUDGET: usize = 1_000_000;

/// Exact `max_{k <= max_k}` over paths that first reach `anchor` at step `k`
/// of `sum_t gamma^t r_t + gamma^k v_phi(anchor)`, by backward DP.
///
/// Only deterministic MDPs are accepted. Returns `-inf` when no admissible
/// path exists.
pub fn brute_force_relay_oracle(
    mdp: &TabularMdp,
    v_phi: &[f64],
    s: usize,
    anchor: usize,
    max_k: usize,
) -> Result<f64> {
    Ok(brute_force_relay_column(mdp, v_phi, anchor, max_k)?[s])
}

/// Oracle values for every source at once.
pub fn brute_force_relay_column(mdp: &TabularMdp, v_phi: &[f64], anchor: usize, max_k: usize) -> Result<Vec<f64>> {
    check_field(mdp, v_phi)?;
    let n = mdp.n_states();
    if anchor >= n {
        return invalid(format!("anchor {anchor} out of range"));
    }
    if !mdp.is_deterministic() {
        return Err(Error::TooLarge(
            "brute-force relay oracle only handles deterministic MDPs".into(),
        ));
    }
    if n.saturating_mul(max_k) > ORACLE_BUDGET {
        return Err(Error::TooLarge(format!(
            "{n} states x {max_k} steps exceeds the oracle budget of {ORACLE_BUDGET}"
        )));
    }
    let g = mdp.gamma();
    // paths[s]: best value of a path from s that first hits the anchor in exactly k steps.
    let mut paths = vec![f64::NEG_INFINITY; n];
    paths[anchor] = v_phi[anchor];
    let mut best = paths.clone();
    let mut next = vec![f64::NEG_INFINITY; n];
    for _ in 1..=max_k {
        for (s, o) in next.iter_mut().enumerate() {
            *o = if s == anchor {
                f64::NEG_INFINITY
            } else {
                (0..mdp.n_actions())
                    .map(|a| mdp.reward(s, a) + g * paths[mdp.successors(s, a)[0].0])
                    .fold(f64::NEG_INFINITY, f64::max)
            };
        }
        std::mem::swap(&mut paths, &mut next);
        for (b, &p) in best.iter_mut().zip(&paths) {
            *b = b.max(p);
        }
    }
    Ok(best)
}

/// Per-source relay advantage and the anchor that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayAdvantage {
    pub delta: Vec<f64>,
    pub gateway: Vec<usize>,
}

pub fn relay_advantage(relay: &RelayTable, v_phi: &[f64]) -> RelayAdvantage {
    let n = relay.n();
    let mut delta = Vec::with_capacity(n);
    let mut gateway = Vec::with_capacity(n);
    for s in 0..n {
        let (g, best) = relay
            .row(s)
            .iter()
            .copied()
            .enumerate()
            .fold((s, f64::NEG_INFINITY), |acc, (a, x)| if x > acc.1 { (a, x) } else { acc });
        delta.push(best - v_phi[s]);
        gateway.push(g);
    }
    RelayAdvantage { delta, gateway }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HallucinationReport {
    /// `L delta / (1 - gamma^n)`.
    pub bound_horizon: f64,
    /// `L delta / (1 - gamma)`.
    pub bound_infinite: f64,
    pub measured: f64,
}

impl HallucinationReport {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound_infinite + 1e-12
    }
}

/// Points on the line graph used by [`hallucination_bound_check`].
pub const LINE_POINTS: usize = 21;

/// Piecewise-linear zig-zag with slope `±lipschitz` and period 1 on `[0, 2]`.
pub fn zigzag(lipschitz: f64, x: f64) -> f64 {
    let frac = x.rem_euclid(1.0);
    lipschitz * (0.5 - (frac - 0.5).abs())
}

/// Line graph whose optimal value equals `field` at every node.
///
/// Staying pays `(1 - gamma) field(x)` forever; moving costs more than any
/// value difference between neighbours, so staying is always optimal.
pub fn line_graph_mdp(field: &[f64], spacing_cost: f64, gamma: f64) -> Result<TabularMdp> {
    let n = field.len();
    let mut rows = Vec::with_capacity(3 * n);
    let mut reward = Vec::with_capacity(3 * n);
    for (s, &v) in field.iter().enumerate() {
        rows.push(vec![(s.saturating_sub(1), 1.0)]);
        rows.push(vec![((s + 1).min(n - 1), 1.0)]);
        rows.push(vec![(s, 1.0)]);
        reward.extend([-spacing_cost, -spacing_cost, (1.0 - gamma) * v]);
    }
    TabularMdp::new(n, 3, rows, reward, gamma)
}

/// Both published forms of the hallucination bound, plus the error actually
/// incurred when one anchor's bootstrap is evaluated at a point displaced by
/// `delta` on an `L`-Lipschitz field.
pub fn hallucination_bound_check(lipschitz: f64, delta: f64, gamma: f64, n: usize) -> Result<HallucinationReport> {
    if !(lipschitz >= 0.0 && delta >= 0.0) || !lipschitz.is_finite() || !delta.is_finite() {
        return invalid("Lipschitz constant and displacement must be finite and non-negative");
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return invalid(format!("gamma must lie in (0,1), got {gamma}"));
    }
    let bound_horizon = if n == 0 {
        if lipschitz * delta == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        lipschitz * delta / (1.0 - gamma.powi(n as i32))
    };
    let bound_infinite = lipschitz * delta / (1.0 - gamma);
    let h = 2.0 / (LINE_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..LINE_POINTS).map(|i| i as f64 * h).collect();
    let field: Vec<f64> = xs.iter().map(|&x| zigzag(lipschitz, x)).collect();
    let mdp = line_graph_mdp(&field, lipschitz * h + 1.0, gamma)?;
    let tol = 1e-12;
    let mut measured: f64 = 0.0;
    for (anchor, &x) in xs.iter().enumerate() {
        let clean = relay_value_column(&mdp, anchor, field[anchor], tol)?;
        let shifted = relay_value_column(&mdp, anchor, zigzag(lipschitz, x + delta), tol)?;
        measured = measured.max(sup_diff(&clean, &shifted));
    }
    Ok(HallucinationReport { bound_horizon, bound_infinite, measured })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chain3() -> TabularMdp {
        // s0 -> s1 -> s2 -> s2, single action, zero reward.
        TabularMdp::new(3, 1, vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(2, 1.0)]], vec![0.0; 3], 0.9).unwrap()
    }

    #[test]
    fn zero_rewards_zero_values() {
        let v = value_iteration(&chain3(), 1e-10).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_state_closed_form() {
        let mdp = TabularMdp::new(2, 1, vec![vec![(1, 1.0)], vec![(1, 1.0)]], vec![0.0, 1.0], 0.5).unwrap();
        let v = value_iteration(&mdp, 1e-12).unwrap();
        assert_abs_diff_eq!(v[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn myopic_limit() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![(0, 1.0)], vec![(1, 1.0)]],
            vec![0.3, -1.0, 2.0, 5.0],
            1e-9,
        )
        .unwrap();
        let v = value_iteration(&mdp, 1e-12).unwrap();
        assert_abs_diff_eq!(v[0], 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(v[1], 5.0, epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(value_iteration(&chain3(), 0.0).is_err());
    }

    #[test]
    fn absorbing_uncertainty_geometric() {
        let mdp = TabularMdp::new(1, 1, vec![vec![(0, 1.0)]], vec![0.0], 0.9).unwrap();
        let info = InfoField::constant(1, 1, 1.0).unwrap();
        let u = uncertainty_value_iteration(&mdp, &info, 1e-12).unwrap();
        assert_abs_diff_eq!(u[0], 1.0 / (1.0 - 0.81), epsilon = 1e-9);
        let pi = StochasticPolicy::uniform(1, 1);
        let naive = uncertainty_value_iteration_with(&mdp, &info, &pi, 0.9, 1e-12).unwrap();
        assert_abs_diff_eq!(naive[0], 10.0, epsilon = 1e-9);
    }

    #[test]
    fn relay_chain_example() {
        let mdp = chain3();
        let v_phi = [0.0, 0.0, 10.0];
        let col = relay_value_fixed_point(&mdp, &v_phi, 2, 1e-12).unwrap();
        assert_abs_diff_eq!(col[0], 8.1, epsilon = 1e-9);
        let oracle = brute_force_relay_oracle(&mdp, &v_phi, 0, 2, 10).unwrap();
        assert_abs_diff_eq!(oracle, 8.1, epsilon = 1e-12);
        assert_eq!(brute_force_relay_oracle(&mdp, &v_phi, 2, 2, 10).unwrap(), 10.0);
    }

    #[test]
    fn unreachable_anchor_zero() {
        let col = relay_value_fixed_point(&chain3(), &[5.0, 0.0, 0.0], 0, 1e-12).unwrap();
        assert_eq!(col[1], 0.0);
        assert_eq!(col[2], 0.0);
    }

    #[test]
    fn relay_uncertainty_partial_sum() {
        // 5-state chain ending at the anchor, constant shock 2.
        let n = 5;
        let rows = (0..n).map(|s| vec![((s + 1).min(n - 1), 1.0)]).collect();
        let mdp = TabularMdp::new(n, 1, rows, vec![0.0; n], 0.9).unwrap();
        let info = InfoField::constant(n, 1, 2.0).unwrap();
        let pi = StochasticPolicy::uniform(n, 1);
        let col = relay_uncertainty_fixed_point(&mdp, &info, &[0.0; 5], &pi, n - 1, 1e-13).unwrap();
        for (s, &x) in col.iter().enumerate() {
            let k = n - 1 - s;
            let expect: f64 = (0..k).map(|t| 0.81f64.powi(t as i32) * 2.0).sum();
            assert_abs_diff_eq!(x, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn oracle_refuses_stochastic_and_large() {
        let mdp = TabularMdp::new(2, 1, vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)]], vec![0.0; 2], 0.9).unwrap();
        assert!(matches!(brute_force_relay_oracle(&mdp, &[0.0; 2], 0, 1, 5), Err(Error::TooLarge(_))));
        assert!(matches!(brute_force_relay_oracle(&chain3(), &[0.0; 3], 0, 1, 1_000_000), Err(Error::TooLarge(_))));
    }

    #[test]
    fn advantage_on_chain() {
        let mdp = chain3();
        let table = relay_value_table(&mdp, &[0.0, 0.0, 10.0], 1e-12).unwrap();
        let adv = relay_advantage(&table, &[0.0; 3]);
        assert_abs_diff_eq!(adv.delta[0], 8.1, epsilon = 1e-9);
        assert_eq!(adv.gateway[0], 2);
    }

    #[test]
    fn csv_round_trip() {
        let t = RelayTable::new(2, RelayKind::Epistemic, vec![0.1, 1.0 / 3.0, -2.5, 7.0]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("source,0,1\n"));
        assert_eq!(RelayTable::read_csv(buf.as_slice(), RelayKind::Epistemic).unwrap(), t);
    }

    #[test]
    fn hallucination_examples() {
        let zero = hallucination_bound_check(2.0, 0.0, 0.9, 10).unwrap();
        assert_eq!((zero.bound_horizon, zero.bound_infinite, zero.measured), (0.0, 0.0, 0.0));
        let r = hallucination_bound_check(2.0, 0.1, 0.9, 10).unwrap();
        assert_abs_diff_eq!(r.bound_infinite, 2.0, epsilon = 1e-12);
        let r = hallucination_bound_check(1.0, 0.5, 0.5, 5).unwrap();
        assert!(r.measured <= 1.0 && r.holds());
        assert!(r.measured > 0.0);
    }

    #[test]
    fn line_graph_value_is_field() {
        let field: Vec<f64> = (0..LINE_POINTS).map(|i| zigzag(3.0, i as f64 * 0.1)).collect();
        let mdp = line_graph_mdp(&field, 3.0 * 0.1 + 1.0, 0.8).unwrap();
        let v = value_iteration(&mdp, 1e-12).unwrap();
        for (a, b) in v.iter().zip(&field) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}
