//! Free-energy arithmetic on small explicit models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::env::{StochasticPolicy, TabularMdp};
use crate::error::{invalid, Error, Result};

const NORM_TOL: f64 = 1e-12;

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return invalid(format!("{name} must be a non-empty non-negative vector"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORM_TOL {
        return invalid(format!("{name} sums to {sum}"));
    }
    Ok(())
}

/// Latent prior `q(s)`, likelihood `p(o|s)` (row per state) and preference `p(o|C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJointModel {
    prior_s: Vec<f64>,
    likelihood: Vec<f64>,
    preference: Vec<f64>,
}

impl DiscreteJointModel {
    pub fn new(prior_s: Vec<f64>, likelihood: Vec<f64>, preference: Vec<f64>) -> Result<Self> {
        check_distribution("prior", &prior_s)?;
        check_distribution("preference", &preference)?;
        let n_o = preference.len();
        if likelihood.len() != prior_s.len() * n_o {
            return invalid("likelihood must have one row of n_obs entries per state");
        }
        for (s, row) in likelihood.chunks(n_o).enumerate() {
            check_distribution(&format!("likelihood row {s}"), row)?;
        }
        Ok(Self { prior_s, likelihood, preference })
    }

    pub fn n_states(&self) -> usize {
        self.prior_s.len()
    }

    pub fn n_obs(&self) -> usize {
        self.preference.len()
    }

    fn lik(&self, s: usize, o: usize) -> f64 {
        self.likelihood[s * self.n_obs() + o]
    }

    fn marginal_obs(&self) -> Vec<f64> {
        (0..self.n_obs())
            .map(|o| (0..self.n_states()).map(|s| self.prior_s[s] * self.lik(s, o)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfeTerms {
    pub g: f64,
    pub epistemic: f64,
    pub pragmatic: f64,
}

/// Splits expected free energy into mutual information and log-preference.
///
/// `g` is evaluated independently as `E[ln q(s) - ln p(s|o) - ln p(o|C)]` over
/// the joint, with `p(s|o)` the exact posterior of the joint.
pub fn efe_decompose(model: &DiscreteJointModel) -> Result<EfeTerms> {
    let q_o = model.marginal_obs();
    let mut epistemic = 0.0;
    let mut pragmatic = 0.0;
    let mut g = 0.0;
    for (o, &qo) in q_o.iter().enumerate() {
        if qo == 0.0 {
            continue;
        }
        let pref = model.preference[o];
        if pref == 0.0 {
            return Err(Error::LogDomain(format!(
                "observation {o} is reachable but has zero preference"
            )));
        }
        pragmatic += qo * pref.ln();
        for s in 0..model.n_states() {
            let joint = model.prior_s[s] * model.lik(s, o);
            if joint == 0.0 {
                continue;
            }
            let posterior = joint / qo;
            epistemic += joint * (model.lik(s, o) / qo).ln();
            g += joint * (model.prior_s[s].ln() - posterior.ln() - pref.ln());
        }
    }
    Ok(EfeTerms { g, epistemic, pragmatic })
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Per-state reward used by the Boltzmann preference: the action average.
fn state_reward(mdp: &TabularMdp) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| (0..mdp.n_actions()).map(|a| mdp.reward(s, a)).sum::<f64>() / mdp.n_actions() as f64)
        .collect()
}

/// Discounted policy evaluation `(I - gamma P_pi)^{-1} c` by a dense solve.
fn evaluate(mdp: &TabularMdp, policy: &StochasticPolicy, cost: &[f64]) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let g = mdp.gamma();
    let mut m = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for (a, &p) in policy.probs(s).iter().enumerate() {
            for &(t, q) in mdp.successors(s, a) {
                m[(s, t)] -= g * p * q;
            }
        }
    }
    let b = DVector::from_column_slice(cost);
    m.lu()
        .solve(&b)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::Validation("policy evaluation system is singular".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntObjectives {
    /// `-alpha` times the discounted EFE objective, per start state.
    pub scaled_efe: Vec<f64>,
    /// Discounted entropy-regularised return, per start state.
    pub maxent: Vec<f64>,
    pub log_partition: f64,
}

/// Both objectives with preference `p(o) ∝ exp(r(s)/alpha)` and no epistemic term.
pub fn maxent_objectives(mdp: &TabularMdp, policy: &StochasticPolicy, alpha: f64) -> Result<MaxEntObjectives> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return invalid("policy does not match the MDP");
    }
    let r = state_reward(mdp);
    let r_max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = r_max / alpha + r.iter().map(|&x| ((x - r_max) / alpha).exp()).sum::<f64>().ln();
    let neg_entropy: Vec<f64> = (0..mdp.n_states()).map(|s| -entropy(policy.probs(s))).collect();
    let efe_cost: Vec<f64> = (0..mdp.n_states())
        .map(|s| neg_entropy[s] - (r[s] / alpha - log_z))
        .collect();
    let maxent_reward: Vec<f64> = (0..mdp.n_states()).map(|s| r[s] - alpha * neg_entropy[s]).collect();
    let efe = evaluate(mdp, policy, &efe_cost)?;
    let maxent = evaluate(mdp, policy, &maxent_reward)?;
    Ok(MaxEntObjectives {
        scaled_efe: efe.iter().map(|x| -alpha * x).collect(),
        maxent,
        log_partition: log_z,
    })
}

/// `-alpha J_EFE - J_MaxEnt`, averaged over start states.
///
/// Analytically this is `-alpha ln Z / (1 - gamma)` for every policy.
pub fn maxent_gap(mdp: &TabularMdp, policy: &StochasticPolicy, alpha: f64) -> Result<f64> {
    let obj = maxent_objectives(mdp, policy, alpha)?;
    let n = obj.maxent.len() as f64;
    Ok(obj.scaled_efe.iter().zip(&obj.maxent).map(|(e, m)| e - m).sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianBelief {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianBelief {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) || !mean.is_finite() {
            return invalid(format!("need finite mean and positive variance, got ({mean}, {variance})"));
        }
        Ok(Self { mean, variance })
    }
}

/// `KL(q || p)` exactly and by the mean-shift-only second-order form.
pub fn gaussian_kl_pair(q: GaussianBelief, p: GaussianBelief) -> (f64, f64) {
    let d2 = (q.mean - p.mean).powi(2);
    let exact = 0.5 * (p.variance / q.variance).ln() + (q.variance + d2) / (2.0 * p.variance) - 0.5;
    let second_order = d2 / (2.0 * p.variance);
    (exact, second_order)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShockSchedule {
    pub gamma: f64,
    pub variances: Vec<f64>,
}

impl ShockSchedule {
    pub fn new(gamma: f64, variances: Vec<f64>) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return invalid(format!("gamma must lie in [0,1), got {gamma}"));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("shock variances must be finite and non-negative");
        }
        Ok(Self { gamma, variances })
    }

    pub fn constant(gamma: f64, variance: f64, steps: usize) -> Result<Self> {
        Self::new(gamma, vec![variance; steps])
    }

    /// `sum_t gamma^(2t) sigma_t^2`.
    pub fn analytic_variance(&self) -> f64 {
        let g2 = self.gamma * self.gamma;
        let mut w = 1.0;
        let mut total = 0.0;
        for &v in &self.variances {
            total += w * v;
            w *= g2;
        }
        total
    }

    /// `sum_t gamma^t sigma_t^2`, the naive single-power discounting.
    pub fn linear_discount_sum(&self) -> f64 {
        let mut w = 1.0;
        let mut total = 0.0;
        for &v in &self.variances {
            total += w * v;
            w *= self.gamma;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShockVarianceReport {
    pub analytic: f64,
    pub monte_carlo: f64,
    /// 95% half-width for the sample variance.
    pub ci_halfwidth: f64,
}

pub const MIN_SHOCK_SAMPLES: usize = 10_000;

/// Sample variance of `sum_t gamma^t eps_t` against the closed form.
pub fn discounted_shock_variance<R: Rng + ?Sized>(
    schedule: &ShockSchedule,
    mc_samples: usize,
    rng: &mut R,
) -> Result<ShockVarianceReport> {
    if mc_samples < MIN_SHOCK_SAMPLES {
        return invalid(format!("need at least {MIN_SHOCK_SAMPLES} samples, got {mc_samples}"));
    }
    let scales: Vec<f64> = schedule
        .variances
        .iter()
        .scan(1.0, |w, &v| {
            let s = *w * v.sqrt();
            *w *= schedule.gamma;
            Some(s)
        })
        .collect();
    let draws: Vec<f64> = (0..mc_samples)
        .map(|_| scales.iter().map(|&c| c * rng.sample::<f64, _>(StandardNormal)).sum())
        .collect();
    let n = mc_samples as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in &draws {
        let d2 = (x - mean).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    let var = m2 / (n - 1.0);
    let m4 = m4 / n;
    let se = ((m4 - (m2 / n).powi(2)) / n).max(0.0).sqrt();
    Ok(ShockVarianceReport { analytic: schedule.analytic_variance(), monte_carlo: var, ci_halfwidth: 1.96 * se })
}

/// Conjugate model: `theta ~ N(0, tau^2)`, `y | theta ~ N(theta, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianLinearModel {
    pub prior_variance: f64,
    pub noise_variance: f64,
    pub true_mean: f64,
}

impl GaussianLinearModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_variance > 0.0 && self.noise_variance > 0.0) || !self.true_mean.is_finite() {
            return invalid("variances must be positive and the mean finite");
        }
        Ok(())
    }

    /// Posterior variance after `n` observations.
    pub fn posterior_variance(&self, n: usize) -> f64 {
        1.0 / (1.0 / self.prior_variance + n as f64 / self.noise_variance)
    }

    /// `1/2 F Sigma` with `F = 1/sigma^2` the per-observation Fisher information.
    pub fn surrogate(&self, n: usize) -> f64 {
        0.5 * self.posterior_variance(n) / self.noise_variance
    }

    /// Closed-form expected KL gain of one more observation, `1/2 ln(1 + v/sigma^2)`.
    pub fn exact_gain(&self, n: usize) -> f64 {
        0.5 * (self.posterior_variance(n) / self.noise_variance).ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherReport {
    pub mean_kl_gain: f64,
    pub surrogate: f64,
}

/// Monte Carlo expected posterior KL gain of one observation after `n_obs`
/// observations have been absorbed, against `1/2 F Sigma_post`.
///
/// Each sample simulates `n_obs` observations from `true_mean`, then draws
/// the next observation from the posterior predictive.
pub fn fisher_surrogate_check<R: Rng + ?Sized>(
    model: &GaussianLinearModel,
    n_obs: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<FisherReport> {
    model.validate()?;
    if mc_samples == 0 {
        return invalid("need at least one Monte Carlo sample");
    }
    let sigma2 = model.noise_variance;
    let v = model.posterior_variance(n_obs);
    let v_next = model.posterior_variance(n_obs + 1);
    let mut total = 0.0;
    for _ in 0..mc_samples {
        let mut sum_y = 0.0;
        for _ in 0..n_obs {
            sum_y += model.true_mean + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        let mu = v * sum_y / sigma2;
        let y = mu + (v + sigma2).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mu_next = v_next * (mu / v + y / sigma2);
        let q = GaussianBelief { mean: mu_next, variance: v_next };
        let p = GaussianBelief { mean: mu, variance: v };
        total += gaussian_kl_pair(q, p).0;
    }
    Ok(FisherReport { mean_kl_gain: total / mc_samples as f64, surrogate: model.surrogate(n_obs) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    #[test]
    fn independence_kills_information() {
        let m = DiscreteJointModel::new(vec![0.3, 0.7], vec![0.4, 0.6, 0.4, 0.6], vec![0.5, 0.5]).unwrap();
        let t = efe_decompose(&m).unwrap();
        assert_abs_diff_eq!(t.epistemic, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.g, -t.pragmatic, epsilon = 1e-12);
    }

    #[test]
    fn permutation_likelihood_gives_entropy() {
        let n = 4;
        let mut lik = vec![0.0; n * n];
        for s in 0..n {
            lik[s * n + (s + 1) % n] = 1.0;
        }
        let m = DiscreteJointModel::new(vec![0.25; 4], lik, vec![0.25; 4]).unwrap();
        assert_abs_diff_eq!(efe_decompose(&m).unwrap().epistemic, 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn zero_preference_is_log_domain_error() {
        let m = DiscreteJointModel::new(vec![1.0], vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        assert!(matches!(efe_decompose(&m), Err(Error::LogDomain(_))));
    }

    #[test]
    fn kl_examples() {
        let a = GaussianBelief::new(0.0, 1.0).unwrap();
        assert_eq!(gaussian_kl_pair(a, a), (0.0, 0.0));
        let (e, s) = gaussian_kl_pair(a, GaussianBelief::new(1.0, 1.0).unwrap());
        assert_abs_diff_eq!(e, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.5, epsilon = 1e-15);
        assert!(GaussianBelief::new(0.0, 0.0).is_err());
    }

    #[test]
    fn shock_closed_forms() {
        let s = ShockSchedule::new(0.0, vec![2.5, 1.0, 7.0]).unwrap();
        assert_eq!(s.analytic_variance(), 2.5);
        let s = ShockSchedule::constant(0.9, 1.0, 50).unwrap();
        assert_abs_diff_eq!(s.analytic_variance(), (1.0 - 0.81f64.powi(50)) / 0.19, epsilon = 1e-12);
        assert!(s.analytic_variance() < s.linear_discount_sum());
        assert!(discounted_shock_variance(&s, 10, &mut seeded(0)).is_err());
    }

    #[test]
    fn fisher_zero_prior_variance() {
        let m = GaussianLinearModel { prior_variance: 1e-12, noise_variance: 1.0, true_mean: 0.0 };
        let r = fisher_surrogate_check(&m, 1, 1000, &mut seeded(2)).unwrap();
        assert!(r.mean_kl_gain < 1e-9 && r.surrogate < 1e-9);
    }

    #[test]
    fn surrogate_contracts() {
        let m = GaussianLinearModel { prior_variance: 1.0, noise_variance: 1.0, true_mean: 0.3 };
        assert_eq!(m.surrogate(0), 0.5);
        for n in 0..50 {
            assert!(m.surrogate(n + 1) < m.surrogate(n));
        }
    }

    #[test]
    fn maxent_single_state() {
        let mdp = TabularMdp::new(1, 2, vec![vec![(0, 1.0)], vec![(0, 1.0)]], vec![0.7, 0.7], 0.9).unwrap();
        let pi = StochasticPolicy::new(1, 2, vec![0.3, 0.7]).unwrap();
        let gap = maxent_gap(&mdp, &pi, 1.0).unwrap();
        // Z = exp(0.7) on one state.
        assert_abs_diff_eq!(gap, -0.7 / 0.1, epsilon = 1e-9);
    }
}
