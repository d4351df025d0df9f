//! Named property checks on the built-in instances.
//!
//! Every check reports what it measured, the bound it was held to and
//! whether it passed. `verify <suite>` on the command line and the
//! acceptance tests both run these functions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use relay_core::agent::Mode;
use relay_core::efe::*;
use relay_core::env::{BottleneckGrid, StochasticPolicy, ThreeRingSpec};
use relay_core::potentials::*;
use relay_core::rng::{StreamKey, StreamRng};
use relay_core::sampler::*;
use relay_core::topology::*;
use serde::Serialize;

use crate::config::{EnvSpec, ExperimentConfig};
use crate::error::{config_err, Error, Result};
use crate::instances::{self, random_deterministic_mdp, random_mdp, rng};
use crate::run::{cells, run_cells};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "relation", rename_all = "snake_case")]
pub enum Bound {
    AtMost { limit: f64 },
    Below { limit: f64 },
    Above { limit: f64 },
    Within { lo: f64, hi: f64 },
    /// Reported, never fails.
    Info,
}

impl Bound {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => x <= limit,
            Bound::Below { limit } => x < limit,
            Bound::Above { limit } => x > limit,
            Bound::Within { lo, hi } => lo <= x && x <= hi,
            Bound::Info => true,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Bound::AtMost { limit } => write!(f, "<= {limit:e}"),
            Bound::Below { limit } => write!(f, "< {limit:e}"),
            Bound::Above { limit } => write!(f, "> {limit:e}"),
            Bound::Within { lo, hi } => write!(f, "in [{lo}, {hi}]"),
            Bound::Info => f.write_str("(informational)"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// The property under test, in words.
    pub property: String,
    pub measured: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, property: &str, measured: f64, bound: Bound) -> Self {
        let passed = !measured.is_nan() && bound.holds(measured);
        Self { name: name.into(), property: property.into(), measured, bound, passed }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match (self.bound, self.passed) {
            (Bound::Info, _) => "INFO",
            (_, true) => "PASS",
            (_, false) => "FAIL",
        };
        write!(f, "{status} {}: measured {:.6e} {} ({})", self.name, self.measured, self.bound, self.property)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Potentials,
    Efe,
    Sampler,
    Topology,
    /// The agent-loop comparison; slow, so not part of `all`.
    Agent,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "potentials" => Suite::Potentials,
            "efe" => Suite::Efe,
            "sampler" => Suite::Sampler,
            "topology" => Suite::Topology,
            "agent" => Suite::Agent,
            "" => return config_err("empty suite name"),
            other => return config_err(format!("unknown suite `{other}` (all, potentials, efe, sampler, topology, agent)")),
        })
    }
}

/// Runs a suite sequentially so the report order is fixed.
pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::Potentials) {
        out.extend(contraction()?);
        out.extend(global_optimality()?);
        out.push(oracle_equivalence()?);
        out.push(hallucination_bound()?);
    }
    if matches!(suite, Suite::All | Suite::Efe) {
        out.extend(quadratic_discount()?);
        out.push(efe_identity()?);
        out.extend(maxent_equivalence()?);
        out.push(fisher_surrogate()?);
        out.extend(gaussian_kl_proxy()?);
    }
    if matches!(suite, Suite::All | Suite::Sampler) {
        out.extend(island_speedup()?);
        out.extend(optimal_proposal_variance()?);
    }
    if matches!(suite, Suite::All | Suite::Topology) {
        out.push(cheeger_sandwich()?);
        out.extend(bottleneck_hitting()?);
    }
    if suite == Suite::Agent {
        out.extend(agent_speedup()?);
    }
    Ok(out)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_vec(rng: &mut StreamRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn simplex(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn random_policy(rng: &mut StreamRng, n: usize, a: usize) -> StochasticPolicy {
    let probs = (0..n).flat_map(|_| simplex(rng, a)).collect();
    StochasticPolicy::new(n, a, probs).expect("rows are normalised")
}

/// Both relay operators against 100 random table pairs on 10 MDPs.
pub fn contraction() -> Result<Vec<Check>> {
    let mut slack_v = f64::NEG_INFINITY;
    let mut slack_u = f64::NEG_INFINITY;
    for m in 0..10u64 {
        let mut r = rng(10, m);
        let n = r.random_range(3..=30);
        let a = r.random_range(1..=4);
        let gamma = r.random_range(0.5..0.99);
        let mdp = random_mdp(&mut r, n, a, gamma);
        let v_phi = random_vec(&mut r, n, -5.0, 5.0);
        let info = InfoField::new(n, a, random_vec(&mut r, n * a, 0.0, 1.0))?;
        let u = random_vec(&mut r, n, 0.0, 5.0);
        let policy = random_policy(&mut r, n, a);
        for _ in 0..10 {
            let t1 = random_vec(&mut r, n * n, -10.0, 10.0);
            let t2 = random_vec(&mut r, n * n, -10.0, 10.0);
            let delta = sup_diff(&t1, &t2);
            let v1 = relay_value_operator(&mdp, &v_phi, &RelayTable::new(n, RelayKind::Pragmatic, t1.clone())?);
            let v2 = relay_value_operator(&mdp, &v_phi, &RelayTable::new(n, RelayKind::Pragmatic, t2.clone())?);
            slack_v = slack_v.max(v1.sup_distance(&v2) - gamma * delta);
            let u1 = relay_uncertainty_operator(&mdp, &info, &u, &policy, &RelayTable::new(n, RelayKind::Epistemic, t1)?);
            let u2 = relay_uncertainty_operator(&mdp, &info, &u, &policy, &RelayTable::new(n, RelayKind::Epistemic, t2)?);
            slack_u = slack_u.max(u1.sup_distance(&u2) - gamma * gamma * delta);
        }
    }
    Ok(vec![
        Check::new("contraction/pragmatic", "sup |T T1 - T T2| - gamma sup |T1 - T2|", slack_v, Bound::AtMost { limit: 1e-12 }),
        Check::new("contraction/epistemic", "sup |T T1 - T T2| - gamma^2 sup |T1 - T2|", slack_u, Bound::AtMost { limit: 1e-12 }),
    ])
}

/// Relay table seeded with `V*` recovers `V*` by row maximum and never exceeds it.
pub fn global_optimality() -> Result<Vec<Check>> {
    let mut row_gap: f64 = 0.0;
    let mut excess = f64::NEG_INFINITY;
    for (_, mdp) in instances::suite_mdps() {
        let v = value_iteration(&mdp, 1e-12)?;
        let table = relay_value_table(&mdp, &v, 1e-12)?;
        for (s, &vs) in v.iter().enumerate() {
            let row = table.row(s);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row_gap = row_gap.max((max - vs).abs());
            excess = excess.max(row.iter().map(|x| x - vs).fold(f64::NEG_INFINITY, f64::max));
        }
    }
    Ok(vec![
        Check::new("optimality/row-max", "max_s |max_a' V_relay(s, a') - V*(s)|", row_gap, Bound::AtMost { limit: 1e-6 }),
        Check::new("optimality/dominance", "max_(s, a') V_relay(s, a') - V*(s)", excess, Bound::AtMost { limit: 1e-9 }),
    ])
}

/// Fixed point against exhaustive first-hit path enumeration.
pub fn oracle_equivalence() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let mut r = rng(11, i);
        let gamma = 0.5 + 0.15 * i as f64 / 19.0;
        let mdp = random_deterministic_mdp(&mut r, 6, 2, gamma);
        let v = value_iteration(&mdp, 1e-13)?;
        for anchor in 0..6 {
            let fixed = relay_value_fixed_point(&mdp, &v, anchor, 1e-13)?;
            let oracle = brute_force_relay_column(&mdp, &v, anchor, 50)?;
            worst = worst.max(sup_diff(&fixed, &oracle));
        }
    }
    Ok(Check::new("oracle/deterministic-6", "sup |fixed point - path oracle| over 20 MDPs", worst, Bound::AtMost { limit: 1e-6 }))
}

/// Worst ratio of measured perturbation error to `L delta / (1 - gamma)`
/// over a 10-point grid.
pub fn hallucination_bound() -> Result<Check> {
    let ls = [0.5, 1.0, 2.0, 4.0];
    let deltas = [0.01, 0.05, 0.1, 0.2, 0.3];
    let gammas = [0.8, 0.9, 0.95];
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let rep = hallucination_bound_check(ls[i % 4], deltas[i % 5], gammas[i % 3], 10)?;
        worst = worst.max(rep.measured / rep.bound_infinite);
    }
    Ok(Check::new("hallucination/lipschitz", "max measured error / (L delta / (1 - gamma))", worst, Bound::AtMost { limit: 1.0 }))
}

pub fn quadratic_discount() -> Result<Vec<Check>> {
    let schedule = ShockSchedule::constant(0.9, 1.0, 50)?;
    let rep = discounted_shock_variance(&schedule, 1_000_000, &mut rng(20, 0))?;
    let g2: f64 = 0.81;
    let geometric = (1.0 - g2.powi(50)) / (1.0 - g2);
    Ok(vec![
        Check::new("shock/closed-form", "|sum gamma^2t - geometric series|", (rep.analytic - geometric).abs(), Bound::AtMost { limit: 1e-12 }),
        Check::new(
            "shock/monte-carlo",
            "|MC variance - sum gamma^2t| in CI half-widths (1e6 samples)",
            (rep.monte_carlo - rep.analytic).abs() / rep.ci_halfwidth,
            Bound::AtMost { limit: 3.0 },
        ),
    ])
}

pub fn efe_identity() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let mut r = rng(21, i);
        let (ns, no) = (r.random_range(1..=6), r.random_range(1..=6));
        let prior = simplex(&mut r, ns);
        let lik = (0..ns).flat_map(|_| simplex(&mut r, no)).collect();
        let pref = simplex(&mut r, no);
        let t = efe_decompose(&DiscreteJointModel::new(prior, lik, pref)?)?;
        worst = worst.max((t.g + t.epistemic + t.pragmatic).abs());
    }
    Ok(Check::new("efe/decomposition", "max |G + I(s;o) + E ln p(o|C)| over 1000 models", worst, Bound::AtMost { limit: 1e-10 }))
}

pub fn maxent_equivalence() -> Result<Vec<Check>> {
    let mut r = rng(22, 0);
    let (n, a, gamma, alpha) = (5, 3, 0.9, 1.0);
    let mdp = random_mdp(&mut r, n, a, gamma);
    let mut gaps = Vec::new();
    for _ in 0..12 {
        gaps.push(maxent_gap(&mdp, &random_policy(&mut r, n, a), alpha)?);
    }
    let spread = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max) - gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = (0..n).map(|s| ((0..a).map(|x| mdp.reward(s, x)).sum::<f64>() / a as f64 / alpha).exp()).sum();
    let closed = -alpha * z.ln() / (1.0 - gamma);
    let off = gaps.iter().map(|g| (g - closed).abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::new("maxent/policy-independent", "spread of -alpha J_EFE - J_MaxEnt over 12 policies", spread, Bound::AtMost { limit: 1e-8 }),
        Check::new("maxent/closed-form", "max |gap + alpha ln Z / (1 - gamma)|", off, Bound::AtMost { limit: 1e-8 }),
    ])
}

pub fn fisher_surrogate() -> Result<Check> {
    let model = GaussianLinearModel { prior_variance: 1.0, noise_variance: 1.0, true_mean: 0.5 };
    let rep = fisher_surrogate_check(&model, 20, 100_000, &mut rng(23, 0))?;
    let rel = (rep.mean_kl_gain - rep.surrogate).abs() / rep.surrogate;
    Ok(Check::new("fisher/surrogate", "|MC KL gain - 1/2 F Sigma| / (1/2 F Sigma) after 20 observations", rel, Bound::AtMost { limit: 0.05 }))
}

pub fn gaussian_kl_proxy() -> Result<Vec<Check>> {
    let mut worst: f64 = 0.0;
    for (dm, var) in [(0.1, 1.0), (0.5, 2.0), (-1.3, 0.3), (2.0, 4.0)] {
        let (exact, _) = gaussian_kl_pair(GaussianBelief::new(dm, var)?, GaussianBelief::new(0.0, var)?);
        worst = worst.max((exact - dm * dm / (2.0 * var)).abs());
    }
    let (exact, second) = gaussian_kl_pair(GaussianBelief::new(0.1, 1.01 * 1.01)?, GaussianBelief::new(0.0, 1.0)?);
    Ok(vec![
        Check::new("gaussian-kl/equal-variance", "max |KL - dmu^2 / 2 sigma^2|", worst, Bound::AtMost { limit: 1e-12 }),
        Check::new(
            "gaussian-kl/second-order",
            "relative error of dmu^2 / 2 sigma^2 at sigma_q = 1.01 sigma_p, dmu = 0.1 sigma",
            (exact - second).abs() / exact,
            Bound::Below { limit: 0.05 },
        ),
    ])
}

pub fn island_speedup() -> Result<Vec<Check>> {
    let mut nu_err: f64 = 0.0;
    let mut ratio_err: f64 = 0.0;
    for eps in [0.5, 0.1, 0.01] {
        let (star, traj) = island_densities(eps, 20, 10)?;
        nu_err = nu_err.max((chi2_speedup(&star, &traj)?.nu - 1.0 / eps).abs());
        // rho = q_traj and g = 1_B make q* the zero-variance proposal, so the
        // second-moment ratio of the two estimators is 1 + chi^2
        let g: Vec<f64> = (0..30).map(|s| if s >= 20 { 1.0 } else { 0.0 }).collect();
        let (_, m_traj, _) = analytic_moments(&traj, &g, &traj)?;
        let (_, m_star, _) = analytic_moments(&traj, &g, &star)?;
        ratio_err = ratio_err.max((m_traj / m_star - 1.0 / eps).abs());
    }
    Ok(vec![
        Check::new("island/nu", "max |nu - 1/eps| for eps in {0.5, 0.1, 0.01}", nu_err, Bound::AtMost { limit: 1e-10 }),
        Check::new("island/second-moment", "max |E_traj[w^2] / E_q*[w^2] - 1/eps|", ratio_err, Bound::AtMost { limit: 1e-9 }),
    ])
}

pub fn optimal_proposal_variance() -> Result<Vec<Check>> {
    let mut r = rng(30, 0);
    let n = 12;
    let rho = FiniteDensity::from_weights(&random_vec(&mut r, n, 0.05, 1.0))?;
    let mut g = random_vec(&mut r, n, 0.0, 3.0);
    g[0] = 0.0;
    let q = optimal_proposal(&rho, &g)?;
    let (target, _, var) = analytic_moments(&rho, &g, &q)?;
    let mut margin = f64::INFINITY;
    for _ in 0..20 {
        let mut w = q.mass().to_vec();
        let i = r.random_range(1..n);
        w[i] *= r.random_range(1.1..2.0);
        let other = FiniteDensity::from_weights(&w)?;
        margin = margin.min(analytic_moments(&rho, &g, &other)?.2 - var);
    }
    Ok(vec![
        Check::new("proposal/zero-variance", "Var_q*[w] / J^2", var / (target * target), Bound::AtMost { limit: 1e-12 }),
        Check::new("proposal/perturbed", "min over 20 perturbations of Var_q[w] - Var_q*[w]", margin, Bound::Above { limit: 0.0 }),
    ])
}

pub fn cheeger_sandwich() -> Result<Check> {
    let mut violations = 0;
    for (_, chain) in instances::suite_chains() {
        if !cheeger_check(&chain, &[])?.holds {
            violations += 1;
        }
    }
    Ok(Check::new("cheeger/sandwich", "chains violating phi^2/2 <= gap <= 2 phi", violations as f64, Bound::AtMost { limit: 0.0 }))
}

/// Room sizes of the asserted sweep; the corridor is one cell wide.
pub const ROOM_SWEEP: [usize; 6] = [4, 6, 8, 12, 16, 24];
pub const HITTING_SEEDS: usize = 400;

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub label: String,
    pub conductance: f64,
    pub median: f64,
    pub iqr: f64,
}

fn hitting_point(width: usize, height: usize, corridor: usize, seeds: usize, key: StreamKey) -> Result<SweepPoint> {
    let g = BottleneckGrid::new(width, height, corridor)?;
    let n = g.mdp.n_states();
    let pi = StochasticPolicy::uniform(n, g.mdp.n_actions());
    let chain = ChainView::from_policy(&g.mdp, &pi)?;
    let conductance = min_conductance(&chain, &g.column_cuts())?;
    let start = FiniteDensity::uniform_on(n, &g.room_a())?;
    let cfg = HittingConfig { max_steps: 10_000_000, seeds };
    let rep = hitting_time_mc(&g.mdp, &pi, &start, &g.room_b(), cfg, key)?;
    Ok(SweepPoint { label: format!("{width}x{height}/c{corridor}"), conductance, median: rep.median, iqr: rep.iqr })
}

/// Median uniform-walk hitting time of room B from room A as the rooms grow.
pub fn room_sweep() -> Result<Vec<SweepPoint>> {
    ROOM_SWEEP
        .iter()
        .map(|&w| hitting_point(w, w, 1, HITTING_SEEDS, StreamKey::new(0x746f_706f, 12, w as u64, 0)))
        .collect()
}

/// Same, widening the corridor of a fixed 16x16 pair of rooms.
pub fn corridor_sweep() -> Result<Vec<SweepPoint>> {
    [1, 2, 4, 8]
        .iter()
        .map(|&c| hitting_point(16, 16, c, HITTING_SEEDS, StreamKey::new(0x746f_706f, 13, c as u64, 0)))
        .collect()
}

fn slope(points: &[SweepPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.conductance).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median).collect();
    loglog_slope(&xs, &ys)
}

pub fn bottleneck_hitting() -> Result<Vec<Check>> {
    let mut rooms = room_sweep()?;
    rooms.sort_by(|a, b| a.conductance.total_cmp(&b.conductance));
    let inversions = rooms.windows(2).filter(|w| w[1].median >= w[0].median).count();
    let corridors = corridor_sweep()?;
    Ok(vec![
        Check::new(
            "hitting/monotone",
            "sweep steps where the median hitting time fails to drop as conductance rises",
            inversions as f64,
            Bound::AtMost { limit: 0.0 },
        ),
        Check::new("hitting/slope", "log-log slope of median hitting time on conductance (room-size sweep)", slope(&rooms), Bound::Within { lo: -2.5, hi: -1.0 }),
        Check::new("hitting/corridor-slope", "same slope when widening the corridor of 16x16 rooms", slope(&corridors), Bound::Info),
    ])
}

/// Paired agent runs for the speedup comparison.
pub fn agent_configs() -> Vec<ExperimentConfig> {
    let base = |name: &str, env| ExperimentConfig {
        experiment_name: name.into(),
        env,
        agent: Default::default(),
        sweep: None,
        seeds: (0..20).collect(),
        output_dir: Default::default(),
        modes: Mode::ALL.to_vec(),
    };
    vec![
        base("speedup-three-ring", EnvSpec::ThreeRing(ThreeRingSpec::default())),
        base("speedup-island", EnvSpec::Island { epsilon: 0.05, size_a: 20, size_b: 10 }),
    ]
}

/// Median first-hit step per mode, censored runs counted at the budget.
pub fn first_hit_medians(config: &ExperimentConfig) -> Result<(f64, f64)> {
    let records = run_cells(config, &cells(config))?;
    let median = |mode| {
        let hits: Vec<f64> = records.iter().filter(|r| r.mode == mode).map(|r| r.result.hit_or_budget() as f64).collect();
        median_iqr(&hits).0
    };
    Ok((median(Mode::Generator), median(Mode::Baseline)))
}

pub fn agent_speedup() -> Result<Vec<Check>> {
    let configs = agent_configs();
    let (ring_gen, ring_base) = first_hit_medians(&configs[0])?;
    let (isl_gen, isl_base) = first_hit_medians(&configs[1])?;
    Ok(vec![
        Check::new(
            "agent/three-ring",
            "generator / baseline median first hit of the middle ring, 20 paired seeds",
            ring_gen / ring_base,
            Bound::AtMost { limit: 0.5 },
        ),
        Check::new(
            "agent/island",
            "generator / baseline median first hit of region B at eps 0.05, 20 paired seeds",
            isl_gen / isl_base,
            Bound::Below { limit: 1.0 },
        ),
    ])
}
