#![allow(dead_code)]

use rand::Rng;
use relay_core::env::TabularMdp;
use relay_core::potentials::{InfoField, RelayKind, RelayTable};
use relay_core::rng::{seeded, StreamRng};

/// Random MDP with 1..=3 successors per row and rewards in [-1, 1].
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
    TabularMdp::new(n, n_actions, rows, reward, gamma).unwrap()
}

/// Deterministic MDP whose action 0 walks a Hamiltonian cycle, so every
/// state reaches every anchor.
pub fn random_deterministic_mdp(rng: &mut StreamRng, n: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut next_on_cycle = vec![0; n];
    for i in 0..n {
        next_on_cycle[order[i]] = order[(i + 1) % n];
    }
    let mut rows = Vec::with_capacity(n * n_actions);
    let mut reward = Vec::with_capacity(n * n_actions);
    for s in 0..n {
        for a in 0..n_actions {
            let t = if a == 0 { next_on_cycle[s] } else { rng.random_range(0..n) };
            rows.push(vec![(t, 1.0)]);
            reward.push(rng.random_range(-1.0..1.0));
        }
    }
    TabularMdp::new(n, n_actions, rows, reward, gamma).unwrap()
}

pub fn random_info(rng: &mut StreamRng, mdp: &TabularMdp) -> InfoField {
    let shocks = (0..mdp.n_states() * mdp.n_actions()).map(|_| rng.random::<f64>()).collect();
    InfoField::new(mdp.n_states(), mdp.n_actions(), shocks).unwrap()
}

pub fn random_table(rng: &mut StreamRng, n: usize, kind: RelayKind, scale: f64) -> RelayTable {
    RelayTable::new(n, kind, (0..n * n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn rng(seed: u64) -> StreamRng {
    seeded(seed)
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
