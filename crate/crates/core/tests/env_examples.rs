use nalgebra::{DMatrix, DVector};
use relay_core::env::*;
use relay_core::potentials::value_iteration;
use relay_core::rng::StreamKey;
use relay_core::sampler::FiniteDensity;
use relay_core::topology::*;

/// Stationary law by solving `pi (P - I) = 0`, `sum pi = 1` densely.
fn dense_stationary(chain: &ChainView) -> Vec<f64> {
    let n = chain.n_states();
    let p = chain.dense();
    let mut m = DMatrix::from_fn(n, n, |i, j| p[j * n + i] - if i == j { 1.0 } else { 0.0 });
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    m.lu().solve(&rhs).unwrap().iter().copied().collect()
}

fn rows_sum_to_one(mdp: &TabularMdp) {
    assert!(mdp.max_row_error() < 1e-12);
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            assert!(mdp.successors(s, a).iter().all(|&(t, p)| t < mdp.n_states() && p > 0.0));
        }
    }
}

#[test]
fn builtin_envs_are_stochastic() {
    rows_sum_to_one(&build_island_mdp(&IslandSpec { epsilon: 0.01, size_a: 10, size_b: 5 }).unwrap());
    rows_sum_to_one(&build_bottleneck_grid(6, 5, 2).unwrap());
    rows_sum_to_one(&build_three_ring(&ThreeRingSpec::default()).unwrap());
}

#[test]
fn island_mass_on_b_is_epsilon_order() {
    let spec = IslandSpec { epsilon: 0.01, size_a: 10, size_b: 5 };
    let mdp = build_island_mdp(&spec).unwrap();
    let chain = ChainView::from_policy(&mdp, &StochasticPolicy::uniform(mdp.n_states(), mdp.n_actions())).unwrap();
    let oracle = dense_stationary(&chain);
    for (a, b) in chain.stationary().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9);
    }
    // flow balance across the bridge gives pi(B) = eps pi(0), and solving the
    // A-side balance gives pi(0) = 1 / (|A| (1 + eps))
    let mass_b: f64 = spec.region_b().map(|s| oracle[s]).sum();
    let want = spec.epsilon / (spec.size_a as f64 * (1.0 + spec.epsilon));
    assert!((mass_b - want).abs() < 1e-9, "{mass_b} vs {want}");
    assert!(mass_b < spec.epsilon);
}

#[test]
fn bottleneck_conductance_grows_with_corridor() {
    let phi = |cw| {
        let g = BottleneckGrid::new(8, 8, cw).unwrap();
        let chain = ChainView::from_policy(&g.mdp, &StochasticPolicy::uniform(g.mdp.n_states(), 4)).unwrap();
        min_conductance(&chain, &g.column_cuts()).unwrap()
    };
    let (p1, p2, p4) = (phi(1), phi(2), phi(4));
    assert!(p1 < p2 && p2 < p4, "{p1} {p2} {p4}");
}

#[test]
fn bottleneck_walk_is_doubly_stochastic() {
    let g = BottleneckGrid::new(5, 4, 1).unwrap();
    let chain = ChainView::from_policy(&g.mdp, &StochasticPolicy::uniform(g.mdp.n_states(), 4)).unwrap();
    let n = chain.n_states() as f64;
    assert!(chain.stationary().iter().all(|p| (p - 1.0 / n).abs() < 1e-9));
}

#[test]
fn three_ring_value_peaks_on_outer_band() {
    let t = ThreeRing::new(&ThreeRingSpec::default()).unwrap();
    let v = value_iteration(&t.mdp, 1e-10).unwrap();
    let best = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert_eq!(t.band[best], Some(2));
    let outer = t.ring_states(2).iter().map(|&s| v[s]).fold(f64::INFINITY, f64::min);
    let inner = t.ring_states(0).iter().map(|&s| v[s]).fold(f64::NEG_INFINITY, f64::max);
    assert!(outer > inner);
}

#[test]
fn drift_slows_escape_from_inner_ring() {
    let hit = |drift| {
        let t = ThreeRing::new(&ThreeRingSpec { drift_strength: drift, ..Default::default() }).unwrap();
        let n = t.mdp.n_states();
        let start = FiniteDensity::uniform_on(n, &[t.ring_start(0)]).unwrap();
        let cfg = HittingConfig { max_steps: 200_000, seeds: 50 };
        hitting_time_mc(&t.mdp, &StochasticPolicy::uniform(n, 9), &start, &t.ring_states(1), cfg, StreamKey::new(33, 0, 0, 0))
            .unwrap()
            .median
    };
    let (free, pulled) = (hit(0.0), hit(3.0));
    assert!(pulled > free, "{pulled} <= {free}");
}

#[test]
fn step_with_inverts_the_row_cdf() {
    let mdp = build_island_mdp(&IslandSpec { epsilon: 0.25, size_a: 4, size_b: 2 }).unwrap();
    // bridge row: stay with 0.75, cross with 0.25 spread over B
    assert_eq!(mdp.step_with(0, 1, 0.0), 0);
    assert!(mdp.step_with(0, 1, 0.99) >= 4);
}
