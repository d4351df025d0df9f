//! Markov-chain geometry: conductance, spectral gap and hitting times.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{sample_sparse, StochasticPolicy, TabularMdp};
use crate::error::{invalid, Result};
use crate::rng::StreamKey;
use crate::sampler::FiniteDensity;

const STATIONARY_TOL: f64 = 1e-10;
const STATIONARY_CAP: usize = 5_000_000;

/// Row-stochastic kernel with its stationary distribution.
#[derive(Debug, Clone)]
pub struct ChainView {
    rows: Vec<Vec<(usize, f64)>>,
    stationary: Vec<f64>,
}

impl ChainView {
    /// Chain induced by running `policy` on `mdp`.
    pub fn from_policy(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<Self> {
        if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
            return invalid("policy does not match the MDP");
        }
        let n = mdp.n_states();
        let mut dense = vec![0.0; n];
        let rows = (0..n)
            .map(|s| {
                let mut touched = Vec::new();
                for (a, &p) in policy.probs(s).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for &(t, q) in mdp.successors(s, a) {
                        if dense[t] == 0.0 {
                            touched.push(t);
                        }
                        dense[t] += p * q;
                    }
                }
                touched.sort_unstable();
                touched.into_iter().map(|t| (t, std::mem::take(&mut dense[t]))).collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Validates rows and computes the stationary distribution.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return invalid("chain needs at least one state");
        }
        for (s, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if row.iter().any(|&(t, p)| t >= n || !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return invalid(format!("chain row {s} is not a distribution"));
            }
        }
        let stationary = stationary_distribution(&rows)?;
        Ok(Self { rows, stationary })
    }

    pub fn from_dense(n: usize, kernel: &[f64]) -> Result<Self> {
        if kernel.len() != n * n {
            return invalid("dense kernel has the wrong size");
        }
        let rows = kernel
            .chunks(n)
            .map(|r| r.iter().copied().enumerate().filter(|&(_, p)| p != 0.0).collect())
            .collect();
        Self::from_rows(rows)
    }

    /// `(I + P) / 2`.
    pub fn lazy(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(s, row)| {
                let mut out: Vec<(usize, f64)> = row.iter().map(|&(t, p)| (t, 0.5 * p)).collect();
                match out.iter_mut().find(|(t, _)| *t == s) {
                    Some(e) => e.1 += 0.5,
                    None => out.push((s, 0.5)),
                }
                out
            })
            .collect();
        Self { rows, stationary: self.stationary.clone() }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn dense(&self) -> Vec<f64> {
        let n = self.n_states();
        let mut out = vec![0.0; n * n];
        for (s, row) in self.rows.iter().enumerate() {
            for &(t, p) in row {
                out[s * n + t] += p;
            }
        }
        out
    }

    /// `x P` for a row vector `x`.
    fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (s, row) in self.rows.iter().enumerate() {
            let xs = x[s];
            if xs != 0.0 {
                for &(t, p) in row {
                    out[t] += xs * p;
                }
            }
        }
    }

    /// Largest violation of detailed balance `pi_i P_ij = pi_j P_ji`.
    pub fn detailed_balance_error(&self) -> f64 {
        let n = self.n_states();
        let p = self.dense();
        let pi = &self.stationary;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for &(j, _) in &self.rows[i] {
                worst = worst.max((pi[i] * p[i * n + j] - pi[j] * p[j * n + i]).abs());
            }
        }
        worst
    }

    pub fn is_reversible(&self) -> bool {
        self.detailed_balance_error() < 1e-10
    }

    /// Whether every state reaches every other state.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n_states();
        let reach = |forward: bool| -> usize {
            let mut adj = vec![Vec::new(); n];
            for (s, row) in self.rows.iter().enumerate() {
                for &(t, p) in row {
                    if p > 0.0 {
                        if forward { adj[s].push(t) } else { adj[t].push(s) }
                    }
                }
            }
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            seen[0] = true;
            let mut count = 1;
            while let Some(s) = stack.pop() {
                for &t in &adj[s] {
                    if !seen[t] {
                        seen[t] = true;
                        count += 1;
                        stack.push(t);
                    }
                }
            }
            count
        };
        reach(true) == n && reach(false) == n
    }

    /// Period of an irreducible chain (gcd of cycle lengths through BFS levels).
    pub fn period(&self) -> usize {
        let n = self.n_states();
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0]);
        let mut g = 0usize;
        while let Some(s) = queue.pop_front() {
            for &(t, p) in &self.rows[s] {
                if p <= 0.0 {
                    continue;
                }
                if level[t] == usize::MAX {
                    level[t] = level[s] + 1;
                    queue.push_back(t);
                } else {
                    g = gcd(g, (level[s] + 1).abs_diff(level[t]));
                }
            }
        }
        g.max(1)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Power iteration on the lazy kernel from the uniform vector.
fn stationary_distribution(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>> {
    let n = rows.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut prev = f64::INFINITY;
    for _ in 0..STATIONARY_CAP {
        y.iter_mut().zip(&x).for_each(|(o, &xi)| *o = 0.5 * xi);
        for (s, row) in rows.iter().enumerate() {
            let xs = 0.5 * x[s];
            for &(t, p) in row {
                y[t] += xs * p;
            }
        }
        let total: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= total);
        let diff: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut y);
        // A small step is not a small error on a slowly mixing chain: bound
        // the remaining geometric tail with the observed contraction rate.
        let rate = (diff / prev).min(1.0);
        prev = diff;
        if diff == 0.0 || (rate < 1.0 && diff / (1.0 - rate) < STATIONARY_TOL) {
            return Ok(x);
        }
    }
    Err(crate::Error::NonConvergence { iterations: STATIONARY_CAP, residual: f64::NAN })
}

/// `Q(S, S^c) / min(pi(S), pi(S^c))`.
pub fn conductance(chain: &ChainView, cut: &[usize]) -> Result<f64> {
    let n = chain.n_states();
    let mut inside = vec![false; n];
    for &s in cut {
        if s >= n {
            return invalid(format!("cut state {s} out of range"));
        }
        inside[s] = true;
    }
    let k = inside.iter().filter(|&&b| b).count();
    if k == 0 || k == n {
        return invalid("cut must be a non-empty proper subset");
    }
    Ok(conductance_mask(chain, &inside))
}

fn conductance_mask(chain: &ChainView, inside: &[bool]) -> f64 {
    let pi = chain.stationary();
    let mut flow = 0.0;
    let mut mass = 0.0;
    for (s, &is_in) in inside.iter().enumerate() {
        if is_in {
            mass += pi[s];
            flow += chain
                .row(s)
                .iter()
                .filter(|&&(t, _)| !inside[t])
                .map(|&(_, p)| pi[s] * p)
                .sum::<f64>();
        }
    }
    let denom = mass.min(1.0 - mass);
    if denom <= 0.0 { 0.0 } else { flow / denom }
}

pub fn min_conductance(chain: &ChainView, cuts: &[Vec<usize>]) -> Result<f64> {
    if cuts.is_empty() {
        return invalid("cut family is empty");
    }
    cuts.iter().map(|c| conductance(chain, c)).try_fold(f64::INFINITY, |m, c| Ok(m.min(c?)))
}

/// Exact chain conductance by enumerating every cut; `n <= 20` only.
pub fn exact_conductance(chain: &ChainView) -> Result<f64> {
    let n = chain.n_states();
    if !(2..=20).contains(&n) {
        return invalid("exact conductance enumerates cuts for 2..=20 states only");
    }
    let mut best = f64::INFINITY;
    let mut inside = vec![false; n];
    for mask in 1u32..(1u32 << n) - 1 {
        for (i, b) in inside.iter_mut().enumerate() {
            *b = mask >> i & 1 == 1;
        }
        best = best.min(conductance_mask(chain, &inside));
    }
    Ok(best)
}

/// Best prefix cut of the states sorted by `vector`.
pub fn sweep_cut_conductance(chain: &ChainView, vector: &[f64]) -> f64 {
    let n = chain.n_states();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vector[a].total_cmp(&vector[b]).then(a.cmp(&b)));
    let mut inside = vec![false; n];
    let mut best = f64::INFINITY;
    for &s in &order[..n - 1] {
        inside[s] = true;
        best = best.min(conductance_mask(chain, &inside));
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    /// `1 - |lambda_2|`; zero when a flag is raised.
    pub gap: f64,
    pub lambda2_abs: f64,
    pub reducible: bool,
    pub periodic: bool,
    pub converged: bool,
    /// Right eigenvector for `lambda_2` in original coordinates (reversible chains).
    pub fiedler: Vec<f64>,
}

const POWER_TOL: f64 = 1e-8;
const POWER_CAP: usize = 2_000_000;

/// Second-largest eigenvalue modulus by deflated power iteration.
///
/// Reversible chains are symmetrised with `pi^{1/2}` first; the Rayleigh
/// quotient of the squared operator then gives `|lambda_2|^2` monotonically
/// from below.
pub fn spectral_gap(chain: &ChainView) -> SpectralReport {
    let n = chain.n_states();
    if n == 1 {
        return SpectralReport { gap: 1.0, lambda2_abs: 0.0, reducible: false, periodic: false, converged: true, fiedler: vec![0.0] };
    }
    if !chain.is_irreducible() {
        return SpectralReport { gap: 0.0, lambda2_abs: 1.0, reducible: true, periodic: false, converged: true, fiedler: vec![0.0; n] };
    }
    if chain.period() > 1 {
        return SpectralReport { gap: 0.0, lambda2_abs: 1.0, reducible: false, periodic: true, converged: true, fiedler: vec![0.0; n] };
    }
    let (lambda2_abs, fiedler, converged) = if chain.is_reversible() {
        symmetric_power(chain)
    } else {
        general_power(chain)
    };
    SpectralReport { gap: 1.0 - lambda2_abs, lambda2_abs, reducible: false, periodic: false, converged, fiedler }
}

/// Fixed, seed-independent start vector with components in every direction.
fn start_vector(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5).collect()
}

fn normalise(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

fn symmetric_power(chain: &ChainView) -> (f64, Vec<f64>, bool) {
    let n = chain.n_states();
    let sqrt_pi: Vec<f64> = chain.stationary().iter().map(|p| p.sqrt()).collect();
    // S = D^{1/2} P D^{-1/2}; symmetric by detailed balance.
    let apply = |x: &[f64], out: &mut [f64]| {
        for (s, o) in out.iter_mut().enumerate() {
            *o = chain.row(s).iter().map(|&(t, p)| sqrt_pi[s] * p / sqrt_pi[t] * x[t]).sum();
        }
    };
    let deflate = |x: &mut [f64]| {
        let c: f64 = x.iter().zip(&sqrt_pi).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(&sqrt_pi).for_each(|(v, b)| *v -= c * b);
    };
    let mut x = start_vector(n);
    deflate(&mut x);
    normalise(&mut x);
    let mut y = vec![0.0; n];
    let mut prev = f64::INFINITY;
    let mut estimate = 0.0;
    let mut converged = false;
    let mut streak = 0;
    for _ in 0..POWER_CAP {
        apply(&x, &mut y);
        deflate(&mut y);
        let norm = normalise(&mut y);
        std::mem::swap(&mut x, &mut y);
        estimate = norm;
        if norm == 0.0 {
            converged = true;
            break;
        }
        if (estimate - prev).abs() < POWER_TOL * 1e-4 {
            streak += 1;
            if streak >= 20 {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
        prev = estimate;
    }
    // Sign-stable eigenvalue: Rayleigh quotient on the converged direction.
    apply(&x, &mut y);
    deflate(&mut y);
    let rayleigh: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let lambda = if rayleigh.abs() > estimate { rayleigh.abs() } else { estimate };
    let fiedler = x.iter().zip(&sqrt_pi).map(|(v, s)| v / s).collect();
    (lambda.min(1.0), fiedler, converged)
}

fn general_power(chain: &ChainView) -> (f64, Vec<f64>, bool) {
    let n = chain.n_states();
    let pi = chain.stationary().to_vec();
    // Left iteration on mean-zero row vectors kills the stationary component.
    let deflate = |x: &mut [f64]| {
        let c: f64 = x.iter().sum();
        x.iter_mut().zip(&pi).for_each(|(v, p)| *v -= c * p);
    };
    let mut x = start_vector(n);
    deflate(&mut x);
    normalise(&mut x);
    let mut y = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;
    for k in 1..=POWER_CAP {
        chain.left_mul(&x, &mut y);
        deflate(&mut y);
        let norm = normalise(&mut y);
        std::mem::swap(&mut x, &mut y);
        if norm == 0.0 {
            return (0.0, vec![0.0; n], true);
        }
        history.push(norm.ln());
        // Windowed geometric mean is robust to complex eigenvalue pairs.
        if k >= 2000 && k % 1000 == 0 {
            let recent: f64 = history[k - 1000..].iter().sum::<f64>() / 1000.0;
            let older: f64 = history[k - 2000..k - 1000].iter().sum::<f64>() / 1000.0;
            if (recent.exp() - older.exp()).abs() < POWER_TOL {
                converged = true;
                break;
            }
        }
    }
    let window = history.len().min(1000);
    let lambda = (history[history.len() - window..].iter().sum::<f64>() / window as f64).exp();
    (lambda.min(1.0), vec![0.0; n], converged)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheegerCheck {
    pub conductance: f64,
    pub gap: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Cheeger sandwich on the lazy version of a reversible chain.
///
/// Conductance is exact for up to 16 states; otherwise it is the minimum of
/// `cuts` and the Fiedler sweep cut, both of which upper-bound the true value
/// while the sweep cut keeps the lower inequality valid.
pub fn cheeger_check(chain: &ChainView, cuts: &[Vec<usize>]) -> Result<CheegerCheck> {
    let lazy = chain.lazy();
    if !lazy.is_reversible() {
        return invalid("Cheeger check needs a reversible chain");
    }
    let spec = spectral_gap(&lazy);
    let phi = if lazy.n_states() <= 16 {
        exact_conductance(&lazy)?
    } else {
        let sweep = sweep_cut_conductance(&lazy, &spec.fiedler);
        if cuts.is_empty() { sweep } else { sweep.min(min_conductance(&lazy, cuts)?) }
    };
    let lower = phi * phi / 2.0;
    let upper = 2.0 * phi;
    Ok(CheegerCheck { conductance: phi, gap: spec.gap, lower, upper, holds: lower <= spec.gap && spec.gap <= upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingConfig {
    pub max_steps: u64,
    pub seeds: usize,
}

impl Default for HittingConfig {
    fn default() -> Self {
        Self { max_steps: 1_000_000, seeds: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingReport {
    pub median: f64,
    pub iqr: f64,
    pub censored: usize,
    /// Per-seed first-hit steps; censored runs hold `max_steps`.
    pub samples: Vec<u64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and interquartile range.
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.5), quantile(&v, 0.75) - quantile(&v, 0.25))
}

/// First-hitting steps of `target` from `start_dist`, one independent stream
/// per seed derived from `key`.
pub fn hitting_time_mc(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    start_dist: &FiniteDensity,
    target: &[usize],
    config: HittingConfig,
    key: StreamKey,
) -> Result<HittingReport> {
    if config.seeds < 20 {
        return invalid(format!("need at least 20 seeds, got {}", config.seeds));
    }
    if start_dist.support() != mdp.n_states() {
        return invalid("start distribution does not match the MDP");
    }
    let mut is_target = vec![false; mdp.n_states()];
    for &t in target {
        if t >= mdp.n_states() {
            return invalid(format!("target state {t} out of range"));
        }
        is_target[t] = true;
    }
    let samples: Vec<u64> = (0..config.seeds)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.with_stream(i as u64).rng();
            let mut s = start_dist.sample(&mut rng);
            let mut steps = 0u64;
            while !is_target[s] && steps < config.max_steps {
                let a = policy.sample(s, &mut rng);
                s = sample_sparse(mdp.successors(s, a), &mut rng);
                steps += 1;
            }
            steps
        })
        .collect();
    let censored = samples.iter().filter(|&&x| x >= config.max_steps).count();
    let values: Vec<f64> = samples.iter().map(|&x| x as f64).collect();
    let (median, iqr) = median_iqr(&values);
    Ok(HittingReport { median, iqr, censored, samples })
}

/// Ordinary least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[derive(Debug, Clone, Serialize)]
pub struct TopologyReport {
    pub conductance: f64,
    pub spectral_gap: f64,
    pub hitting_time_median: f64,
    pub hitting_time_iqr: f64,
}
