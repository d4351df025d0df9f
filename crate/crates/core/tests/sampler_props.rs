mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use relay_core::sampler::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn island_speedup_is_inverse_epsilon(eps in 1e-4f64..1.0, a in 1usize..30, b in 1usize..30) {
        let (star, traj) = island_densities(eps, a, b).unwrap();
        let sp = chi2_speedup(&star, &traj).unwrap();
        prop_assert!((sp.nu - 1.0 / eps).abs() <= 1e-10 * (1.0 / eps).max(1.0));
    }

    #[test]
    fn optimal_proposal_ignores_scale(seed in any::<u64>(), n in 2usize..20, c in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let w: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.01).collect();
        let rho = FiniteDensity::from_weights(&w).unwrap();
        let g: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let scaled: Vec<f64> = g.iter().map(|x| c * x).collect();
        let a = optimal_proposal(&rho, &g).unwrap();
        let b = optimal_proposal(&rho, &scaled).unwrap();
        prop_assert!(sup(a.mass(), b.mass()) < 1e-12);
    }

    #[test]
    fn optimal_proposal_has_zero_variance(seed in any::<u64>(), n in 2usize..20) {
        let mut r = rng(seed);
        let w: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.01).collect();
        let rho = FiniteDensity::from_weights(&w).unwrap();
        let g: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.01).collect();
        let q = optimal_proposal(&rho, &g).unwrap();
        let (target, _, var) = analytic_moments(&rho, &g, &q).unwrap();
        prop_assert!(var <= 1e-12 * target * target);
        // Any other full-support proposal is strictly worse.
        let mut other: Vec<f64> = q.mass().to_vec();
        let i = r.random_range(0..n);
        other[i] *= 1.5;
        let other = FiniteDensity::from_weights(&other).unwrap();
        prop_assert!(analytic_moments(&rho, &g, &other).unwrap().2 > var);
    }

    #[test]
    fn second_moment_ratio_is_one_plus_chi2(seed in any::<u64>(), n in 2usize..15) {
        // With g = 1 on the support of q* (q* = rho restricted), E_q[w^2]/J^2 = 1 + chi2(q* || q).
        let mut r = rng(seed);
        let q: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.05).collect();
        let q = FiniteDensity::from_weights(&q).unwrap();
        let rho = FiniteDensity::from_weights(&(0..n).map(|_| r.random::<f64>() + 0.05).collect::<Vec<_>>()).unwrap();
        let g = vec![1.0; n];
        let star = optimal_proposal(&rho, &g).unwrap();
        let (target, second, _) = analytic_moments(&rho, &g, &q).unwrap();
        let sp = chi2_speedup(&star, &q).unwrap();
        prop_assert!((second / (target * target) - sp.nu).abs() < 1e-9);
    }
}

#[test]
fn monte_carlo_variance_matches_closed_form() {
    let rho = FiniteDensity::uniform(4).unwrap();
    let g = [1.0, 2.0, 0.5, 4.0];
    let q = FiniteDensity::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let rep = estimator_variance(&rho, &g, &q, 200_000, &mut rng(11)).unwrap();
    // Oracle: J = 7.5/4, E[w^2] = sum (rho g)^2 / q.
    let j = 7.5 / 4.0;
    let second: f64 = g.iter().zip(q.mass()).map(|(g, q)| (0.25 * g).powi(2) / q).sum();
    assert!((rep.target - j).abs() < 1e-12);
    assert!((rep.analytic_variance - (second - j * j)).abs() < 1e-12);
    assert!((rep.estimate_variance / rep.analytic_variance - 1.0).abs() < 0.05);
    assert!((rep.estimate_mean - j).abs() < 0.02);
}
