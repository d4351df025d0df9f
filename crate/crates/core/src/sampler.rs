//! Importance sampling over finite supports.

use rand::Rng;
use serde::Serialize;

use crate::env::sample_index;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteDensity {
    mass: Vec<f64>,
}

impl FiniteDensity {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() || mass.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return invalid("density must be a non-empty non-negative vector");
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return invalid(format!("density sums to {sum}"));
        }
        Ok(Self { mass })
    }

    /// Normalises a non-negative weight vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return invalid("weights must be finite and non-negative");
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return invalid("weights sum to zero");
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("uniform density needs a non-empty support");
        }
        Ok(Self { mass: vec![1.0 / n as f64; n] })
    }

    /// Uniform over `states` inside a support of size `n`.
    pub fn uniform_on(n: usize, states: &[usize]) -> Result<Self> {
        let mut w = vec![0.0; n];
        for &s in states {
            if s >= n {
                return invalid(format!("state {s} outside support of size {n}"));
            }
            w[s] = 1.0;
        }
        Self::from_weights(&w)
    }

    pub fn support(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.mass, rng)
    }
}

/// `q*(s) ∝ rho(s) * magnitude(s)`.
pub fn optimal_proposal(rho: &FiniteDensity, magnitude: &[f64]) -> Result<FiniteDensity> {
    if magnitude.len() != rho.support() {
        return invalid("magnitude field does not match the density support");
    }
    if magnitude.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return invalid("magnitudes must be finite and non-negative");
    }
    let product: Vec<f64> = rho.mass.iter().zip(magnitude).map(|(r, m)| r * m).collect();
    if product.iter().all(|&x| x == 0.0) {
        return invalid("rho * magnitude vanishes everywhere");
    }
    FiniteDensity::from_weights(&product)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorReport {
    /// `J = sum rho g`.
    pub target: f64,
    pub estimate_mean: f64,
    /// Per-sample variance of the Monte Carlo weights.
    pub estimate_variance: f64,
    pub samples: usize,
    /// `sum (rho g)^2 / q - J^2`.
    pub analytic_variance: f64,
    /// `sum (rho g)^2 / q`.
    pub second_moment: f64,
}

/// Closed-form variance and second moment of the importance weight
/// `rho(s) g(s) / q(s)` with `s ~ q`.
pub fn analytic_moments(rho: &FiniteDensity, integrand: &[f64], proposal: &FiniteDensity) -> Result<(f64, f64, f64)> {
    if integrand.len() != rho.support() || proposal.support() != rho.support() {
        return invalid("integrand, target and proposal must share a support");
    }
    let mut target = 0.0;
    let mut second = 0.0;
    for s in 0..rho.support() {
        let f = rho.mass[s] * integrand[s];
        target += f;
        if f != 0.0 {
            if proposal.mass[s] == 0.0 {
                return Err(Error::SupportViolation { state: s });
            }
            second += f * f / proposal.mass[s];
        }
    }
    Ok((target, second, (second - target * target).max(0.0)))
}

pub fn estimator_variance<R: Rng + ?Sized>(
    rho: &FiniteDensity,
    integrand: &[f64],
    proposal: &FiniteDensity,
    mc_samples: usize,
    rng: &mut R,
) -> Result<EstimatorReport> {
    let (target, second_moment, analytic_variance) = analytic_moments(rho, integrand, proposal)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc_samples {
        let s = proposal.sample(rng);
        let w = rho.mass[s] * integrand[s] / proposal.mass[s];
        sum += w;
        sum_sq += w * w;
    }
    let n = mc_samples.max(1) as f64;
    let mean = sum / n;
    let var = if mc_samples > 1 { (sum_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
    Ok(EstimatorReport {
        target,
        estimate_mean: mean,
        estimate_variance: var,
        samples: mc_samples,
        analytic_variance,
        second_moment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Speedup {
    pub chi2: f64,
    pub nu: f64,
}

/// Pearson `chi^2(q* || q_traj)` and `nu = 1 + chi^2`.
///
/// Mass of `q*` where `q_traj` vanishes yields `+inf` for both.
pub fn chi2_speedup(q_star: &FiniteDensity, q_traj: &FiniteDensity) -> Result<Speedup> {
    if q_star.support() != q_traj.support() {
        return invalid("densities must share a support");
    }
    let mut chi2 = 0.0;
    for (&p, &q) in q_star.mass.iter().zip(&q_traj.mass) {
        if q == 0.0 {
            if p > 0.0 {
                return Ok(Speedup { chi2: f64::INFINITY, nu: f64::INFINITY });
            }
            continue;
        }
        chi2 += q * (p / q - 1.0).powi(2);
    }
    Ok(Speedup { chi2, nu: 1.0 + chi2 })
}

/// The two-region densities: `q*` uniform on B, `q_traj` putting mass
/// `epsilon` on B and `1 - epsilon` on A, each spread uniformly.
pub fn island_densities(epsilon: f64, size_a: usize, size_b: usize) -> Result<(FiniteDensity, FiniteDensity)> {
    if !(epsilon > 0.0 && epsilon <= 1.0) || size_a == 0 || size_b == 0 {
        return invalid("island densities need epsilon in (0,1] and non-empty regions");
    }
    let n = size_a + size_b;
    let mut star = vec![0.0; n];
    let mut traj = vec![0.0; n];
    for s in 0..n {
        if s < size_a {
            traj[s] = (1.0 - epsilon) / size_a as f64;
        } else {
            star[s] = 1.0 / size_b as f64;
            traj[s] = epsilon / size_b as f64;
        }
    }
    Ok((FiniteDensity { mass: star }, FiniteDensity { mass: traj }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_magnitude_returns_rho() {
        let rho = FiniteDensity::new(vec![0.1, 0.2, 0.7]).unwrap();
        let q = optimal_proposal(&rho, &[3.0, 3.0, 3.0]).unwrap();
        for (a, b) in q.mass().iter().zip(rho.mass()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn four_point_example() {
        let rho = FiniteDensity::uniform(4).unwrap();
        let q = optimal_proposal(&rho, &[1.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(q.mass(), &[0.125, 0.125, 0.25, 0.5]);
        let g = [1.0, 1.0, 2.0, 4.0];
        let at_star = estimator_variance(&rho, &g, &q, 1000, &mut seeded(1)).unwrap();
        let at_rho = estimator_variance(&rho, &g, &rho, 1000, &mut seeded(1)).unwrap();
        assert!(at_star.analytic_variance < 1e-15);
        assert!(at_star.estimate_variance < 1e-20);
        assert!(at_rho.analytic_variance > 1.0);
    }

    #[test]
    fn all_zero_product_rejected() {
        let rho = FiniteDensity::new(vec![1.0, 0.0]).unwrap();
        assert!(optimal_proposal(&rho, &[0.0, 5.0]).is_err());
    }

    #[test]
    fn support_violation() {
        let rho = FiniteDensity::uniform(2).unwrap();
        let q = FiniteDensity::new(vec![1.0, 0.0]).unwrap();
        let err = estimator_variance(&rho, &[1.0, 1.0], &q, 10, &mut seeded(0));
        assert!(matches!(err, Err(Error::SupportViolation { state: 1 })));
    }

    #[test]
    fn identical_densities_no_speedup() {
        let p = FiniteDensity::new(vec![0.3, 0.7]).unwrap();
        let s = chi2_speedup(&p, &p).unwrap();
        assert_eq!((s.chi2, s.nu), (0.0, 1.0));
    }

    #[test]
    fn absolute_continuity_violation_is_infinite() {
        let p = FiniteDensity::new(vec![0.5, 0.5]).unwrap();
        let q = FiniteDensity::new(vec![1.0, 0.0]).unwrap();
        assert!(chi2_speedup(&p, &q).unwrap().nu.is_infinite());
    }

    #[test]
    fn island_nu() {
        let (star, traj) = island_densities(0.01, 10, 5).unwrap();
        let s = chi2_speedup(&star, &traj).unwrap();
        assert_abs_diff_eq!(s.chi2, 99.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.nu, 100.0, epsilon = 1e-9);
    }
}
