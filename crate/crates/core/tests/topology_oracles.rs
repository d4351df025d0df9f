mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;
use relay_core::env::{build_island_mdp, IslandSpec, StochasticPolicy};
use relay_core::rng::StreamKey;
use relay_core::sampler::FiniteDensity;
use relay_core::topology::*;

/// Random walk on a connected weighted graph with self-loops.
/// Reversible with `pi` proportional to weighted degree.
fn random_walk(seed: u64, n: usize) -> (ChainView, Vec<f64>) {
    let mut rng = common::rng(seed);
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        // a path keeps it connected, self-loops keep it aperiodic
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
    let deg: Vec<f64> = (0..n).map(|i| w[i * n..(i + 1) * n].iter().sum()).collect();
    let kernel: Vec<f64> = (0..n * n).map(|k| w[k] / deg[k / n]).collect();
    let total: f64 = deg.iter().sum();
    (ChainView::from_dense(n, &kernel).unwrap(), deg.iter().map(|d| d / total).collect())
}

/// `1 - max |lambda|` over all non-unit eigenvalues of the symmetrised kernel.
fn eigen_gap(chain: &ChainView) -> f64 {
    let n = chain.n_states();
    let p = chain.dense();
    let pi = chain.stationary();
    let s = DMatrix::from_fn(n, n, |i, j| pi[i].sqrt() * p[i * n + j] / pi[j].sqrt());
    let s = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().map(|x| x.abs()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    1.0 - ev[1]
}

#[test]
fn stationary_tight_on_slow_mixing_walk() {
    // step size 1e-10 once left a 1e-9 error on this walk
    let (chain, pi) = random_walk(7103589347945577016, 6);
    for (a, b) in chain.stationary().iter().zip(&pi) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stationary_matches_degree(seed in any::<u64>(), n in 2usize..12) {
        let (chain, pi) = random_walk(seed, n);
        prop_assert!(chain.is_reversible());
        for (a, b) in chain.stationary().iter().zip(&pi) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b} diff {}", (a-b).abs());
        }
    }

    #[test]
    fn spectral_gap_matches_eigen(seed in any::<u64>(), n in 2usize..12) {
        let (chain, _) = random_walk(seed, n);
        let rep = spectral_gap(&chain);
        prop_assert!(rep.converged && !rep.reducible && !rep.periodic);
        prop_assert!((rep.gap - eigen_gap(&chain)).abs() < 1e-5, "{} vs {}", rep.gap, eigen_gap(&chain));
    }

    #[test]
    fn cheeger_sandwich_holds(seed in any::<u64>(), n in 2usize..12) {
        let (chain, _) = random_walk(seed, n);
        let c = cheeger_check(&chain, &[]).unwrap();
        prop_assert!(c.holds, "{c:?}");
        prop_assert!((c.conductance - exact_conductance(&chain.lazy()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sweep_cut_upper_bounds_exact(seed in any::<u64>(), n in 2usize..12) {
        let (chain, _) = random_walk(seed, n);
        let rep = spectral_gap(&chain);
        prop_assert!(sweep_cut_conductance(&chain, &rep.fiedler) >= exact_conductance(&chain).unwrap() - 1e-12);
    }
}

#[test]
fn complete_graph_gap() {
    // uniform jump to the other n-1 states: eigenvalues 1 and -1/(n-1)
    for n in [3usize, 5, 8] {
        let kernel: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 / (n - 1) as f64 }).collect();
        let rep = spectral_gap(&ChainView::from_dense(n, &kernel).unwrap());
        let want = 1.0 - 1.0 / (n - 1) as f64;
        assert!((rep.gap - want).abs() < 1e-6, "n={n}: {} vs {want}", rep.gap);
    }
}

#[test]
fn exact_conductance_single_cut_by_hand() {
    // two-state chain with flip probability p: Q(S, S^c) / pi(S) = p
    for p in [0.1, 0.3, 0.5] {
        let chain = ChainView::from_dense(2, &[1.0 - p, p, p, 1.0 - p]).unwrap();
        assert!((exact_conductance(&chain).unwrap() - p).abs() < 1e-12);
    }
}

fn island_hitting(eps: f64, seeds: usize) -> f64 {
    let spec = IslandSpec { epsilon: eps, size_a: 10, size_b: 5 };
    let mdp = build_island_mdp(&spec).unwrap();
    let pi = StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let a: Vec<usize> = spec.region_a().collect();
    let b: Vec<usize> = spec.region_b().collect();
    let start = FiniteDensity::uniform_on(mdp.n_states(), &a).unwrap();
    hitting_time_mc(&mdp, &pi, &start, &b, HittingConfig { max_steps: 10_000_000, seeds }, StreamKey::new(31, 0, 0, 0))
        .unwrap()
        .median
}

#[test]
fn island_hitting_scales_with_inverse_epsilon() {
    let ratio = island_hitting(0.01, 200) / island_hitting(0.1, 200);
    assert!((5.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn frontier_start_beats_buffer_start() {
    let spec = IslandSpec { epsilon: 0.05, size_a: 10, size_b: 5 };
    let mdp = build_island_mdp(&spec).unwrap();
    let pi = StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let a: Vec<usize> = spec.region_a().collect();
    let b: Vec<usize> = spec.region_b().collect();
    let cfg = HittingConfig { max_steps: 1_000_000, seeds: 200 };
    let key = StreamKey::new(32, 0, 0, 0);
    let buffer = FiniteDensity::uniform_on(mdp.n_states(), &a).unwrap();
    let jump = FiniteDensity::uniform_on(mdp.n_states(), &[IslandSpec::BRIDGE_STATE]).unwrap();
    let from_buffer = hitting_time_mc(&mdp, &pi, &buffer, &b, cfg, key).unwrap();
    let from_jump = hitting_time_mc(&mdp, &pi, &jump, &b, cfg, key).unwrap();
    assert!(from_jump.median <= from_buffer.median, "{} > {}", from_jump.median, from_buffer.median);
}

#[test]
fn slope_of_power_law() {
    let xs = [1.0, 2.0, 4.0, 8.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
    assert!((loglog_slope(&xs, &ys) + 1.5).abs() < 1e-12);
}
