//! Built-in test instances shared by the verification suites.

use rand::Rng;
use relay_core::env::{build_bottleneck_grid, build_island_mdp, IslandSpec, StochasticPolicy, TabularMdp};
use relay_core::rng::{StreamKey, StreamRng};
use relay_core::topology::ChainView;

/// Experiment id reserved for verification streams.
const VERIFY_STREAM: u64 = 0x7665_7269_6679;

pub fn rng(suite: u64, index: u64) -> StreamRng {
    StreamKey::new(VERIFY_STREAM, suite, index, 0).rng()
}

/// Random MDP with one to three successors per row and rewards in [-1, 1].
pub fn random_mdp(rng: &mut StreamRng, n: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let mut rows = Vec::with_capacity(n * n_actions);
    let mut reward = Vec::with_capacity(n * n_actions);
    for _ in 0..n * n_actions {
        let k = rng.random_range(1..=3.min(n));
        let mut row: Vec<(usize, f64)> = (0..k).map(|_| (rng.random_range(0..n), rng.random::<f64>() + 0.1)).collect();
        let z: f64 = row.iter().map(|r| r.1).sum();
        for r in &mut row {
            r.1 /= z;
        }
        rows.push(row);
        reward.push(rng.random_range(-1.0..1.0));
    }
    TabularMdp::new(n, n_actions, rows, reward, gamma).expect("rows are normalised")
}

/// Deterministic MDP whose action 0 follows a random Hamiltonian cycle, so
/// every anchor is reachable from every source.
pub fn random_deterministic_mdp(rng: &mut StreamRng, n: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut next = vec![0; n];
    for i in 0..n {
        next[order[i]] = order[(i + 1) % n];
    }
    let mut rows = Vec::with_capacity(n * n_actions);
    let mut reward = Vec::with_capacity(n * n_actions);
    for &on_cycle in &next {
        for a in 0..n_actions {
            let t = if a == 0 { on_cycle } else { rng.random_range(0..n) };
            rows.push(vec![(t, 1.0)]);
            reward.push(rng.random_range(-1.0..1.0));
        }
    }
    TabularMdp::new(n, n_actions, rows, reward, gamma).expect("rows are normalised")
}

/// Random walk on a connected weighted graph with self-loops (reversible,
/// aperiodic).
pub fn random_walk(rng: &mut StreamRng, n: usize) -> ChainView {
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        if i + 1 < n {
            let x = rng.random_range(0.1..1.0);
            w[i * n + i + 1] = x;
            w[(i + 1) * n + i] = x;
        }
        w[i * n + i] = rng.random_range(0.1..1.0);
        for j in i + 1..n {
            if rng.random::<f64>() < 0.3 {
                let x = rng.random_range(0.1..1.0);
                w[i * n + j] += x;
                w[j * n + i] += x;
            }
        }
    }
    let kernel: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row = &w[i * n..(i + 1) * n];
            let d: f64 = row.iter().sum();
            row.iter().map(move |x| x / d).collect::<Vec<_>>()
        })
        .collect();
    ChainView::from_dense(n, &kernel).expect("rows are normalised")
}

/// The MDP suite: random MDPs of several sizes plus small built-in envs,
/// all with at most 50 states.
pub fn suite_mdps() -> Vec<(String, TabularMdp)> {
    let mut out = Vec::new();
    for (i, &(n, a, gamma)) in [(5, 2, 0.9), (10, 3, 0.9), (20, 3, 0.95), (30, 4, 0.9), (50, 3, 0.8)].iter().enumerate() {
        out.push((format!("random-{n}"), random_mdp(&mut rng(1, i as u64), n, a, gamma)));
    }
    out.push(("island-10-5".into(), build_island_mdp(&IslandSpec { epsilon: 0.05, size_a: 10, size_b: 5 }).unwrap()));
    out.push(("bottleneck-4x4".into(), build_bottleneck_grid(4, 4, 1).unwrap()));
    out
}

/// Reversible chains used for the Cheeger checks.
pub fn suite_chains() -> Vec<(String, ChainView)> {
    let mut out: Vec<(String, ChainView)> =
        (0..10).map(|i| (format!("walk-{}", 3 + i), random_walk(&mut rng(2, i), 3 + i as usize))).collect();
    for (w, h, c) in [(3, 3, 1), (4, 4, 2), (6, 6, 1), (8, 8, 4)] {
        let mdp = build_bottleneck_grid(w, h, c).unwrap();
        let chain = ChainView::from_policy(&mdp, &StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions())).unwrap();
        out.push((format!("bottleneck-{w}x{h}-c{c}"), chain));
    }
    out
}
