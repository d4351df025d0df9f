use crate::efe::entropy;
use crate::env::TabularMdp;
use crate::error::{invalid, Result};

/// Dirichlet posterior over each transition row.
///
/// The prior places `pseudocount` on every successor the environment can
/// produce from `(s, a)`; the learner knows which transitions are possible,
/// not how likely they are.
#[derive(Debug, Clone)]
pub struct WorldModelCounts {
    n_states: usize,
    n_actions: usize,
    pseudocount: f64,
    support: Vec<Vec<usize>>,
    counts: Vec<Vec<f64>>,
    totals: Vec<f64>,
    info: Vec<f64>,
    reward_sum: Vec<f64>,
    known_reward: Option<Vec<f64>>,
    visits: Vec<u64>,
}

impl WorldModelCounts {
    pub fn new(structure: &TabularMdp, pseudocount: f64) -> Result<Self> {
        if !(pseudocount > 0.0 && pseudocount.is_finite()) {
            return invalid(format!("pseudocount must be positive, got {pseudocount}"));
        }
        let (n, a) = (structure.n_states(), structure.n_actions());
        let support: Vec<Vec<usize>> = (0..n * a)
            .map(|i| structure.successors(i / a, i % a).iter().map(|&(t, _)| t).collect())
            .collect();
        let counts = support.iter().map(|s| vec![0.0; s.len()]).collect();
        let mut wm = Self {
            n_states: n,
            n_actions: a,
            pseudocount,
            support,
            counts,
            totals: vec![0.0; n * a],
            info: vec![0.0; n * a],
            reward_sum: vec![0.0; n * a],
            known_reward: None,
            visits: vec![0; n * a],
        };
        for i in 0..n * a {
            wm.info[i] = wm.expected_gain(i);
        }
        Ok(wm)
    }

    /// Gives the model the environment's reward table; only the transition
    /// probabilities are left to learn.
    pub fn with_known_rewards(mut self, structure: &TabularMdp) -> Result<Self> {
        if structure.n_states() != self.n_states || structure.n_actions() != self.n_actions {
            return invalid("reward table shape does not match the model");
        }
        self.known_reward = Some(structure.rewards().to_vec());
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn pseudocount(&self) -> f64 {
        self.pseudocount
    }

    /// Dirichlet parameters `(successor, alpha + count)` for a row.
    pub fn dirichlet_row(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let i = s * self.n_actions + a;
        self.support[i].iter().zip(&self.counts[i]).map(|(&t, &c)| (t, self.pseudocount + c)).collect()
    }

    /// Posterior-mean transition row.
    pub fn mean_row(&self, s: usize, a: usize) -> Vec<(usize, f64)> {
        let i = s * self.n_actions + a;
        let denom = self.pseudocount * self.support[i].len() as f64 + self.totals[i];
        self.support[i]
            .iter()
            .zip(&self.counts[i])
            .map(|(&t, &c)| (t, (self.pseudocount + c) / denom))
            .collect()
    }

    /// Posterior-mean expectation of `v` at the successor of `(s, a)`.
    pub fn expect(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let i = s * self.n_actions + a;
        let denom = self.pseudocount * self.support[i].len() as f64 + self.totals[i];
        self.support[i]
            .iter()
            .zip(&self.counts[i])
            .map(|(&t, &c)| (self.pseudocount + c) * v[t])
            .sum::<f64>()
            / denom
    }

    fn mean_probs(&self, i: usize) -> Vec<f64> {
        let denom = self.pseudocount * self.support[i].len() as f64 + self.totals[i];
        self.counts[i].iter().map(|&c| (self.pseudocount + c) / denom).collect()
    }

    /// Expected KL from the current predictive row to the row after one more
    /// observation drawn from it.
    fn expected_gain(&self, i: usize) -> f64 {
        let k = self.support[i].len();
        if k < 2 {
            return 0.0;
        }
        let p = self.mean_probs(i);
        let denom_next = self.pseudocount * k as f64 + self.totals[i] + 1.0;
        let mut total = 0.0;
        for (obs, &p_obs) in p.iter().enumerate() {
            let mut kl = 0.0;
            for (j, &pj) in p.iter().enumerate() {
                let bump = if j == obs { 1.0 } else { 0.0 };
                let qj = (self.pseudocount + self.counts[i][j] + bump) / denom_next;
                kl += qj * (qj / pj).ln();
            }
            total += p_obs * kl;
        }
        total.max(0.0)
    }

    /// Local epistemic shock `I(s, a)`: expected posterior KL of the next update.
    #[inline]
    pub fn info_gain(&self, s: usize, a: usize) -> f64 {
        self.info[s * self.n_actions + a]
    }

    /// Records a real transition and returns the realised posterior KL.
    pub fn observe(&mut self, s: usize, a: usize, reward: f64, next: usize) -> f64 {
        let i = s * self.n_actions + a;
        let before = self.mean_probs(i);
        let Some(j) = self.support[i].iter().position(|&t| t == next) else {
            // Impossible under the structural prior; keep the model unchanged.
            return 0.0;
        };
        self.counts[i][j] += 1.0;
        self.totals[i] += 1.0;
        self.reward_sum[i] += reward;
        self.visits[i] += 1;
        let after = self.mean_probs(i);
        self.info[i] = self.expected_gain(i);
        after.iter().zip(&before).map(|(q, p)| q * (q / p).ln()).sum::<f64>().max(0.0)
    }

    /// Known reward if supplied, else the empirical mean (zero for untried pairs).
    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        let i = s * self.n_actions + a;
        if let Some(r) = &self.known_reward {
            return r[i];
        }
        if self.visits[i] == 0 { 0.0 } else { self.reward_sum[i] / self.visits[i] as f64 }
    }

    pub fn pair_visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.n_actions + a]
    }

    pub fn state_visits(&self, s: usize) -> u64 {
        (0..self.n_actions).map(|a| self.pair_visits(s, a)).sum()
    }

    /// Mean over actions of the posterior-mean row entropy.
    pub fn mean_entropy(&self, s: usize) -> f64 {
        (0..self.n_actions)
            .map(|a| entropy(&self.mean_probs(s * self.n_actions + a)))
            .sum::<f64>()
            / self.n_actions as f64
    }

    /// Visited states plus their one-step model successors.
    pub fn reachable(&self, visited: &[bool]) -> Vec<bool> {
        let mut out = visited.to_vec();
        for (s, _) in visited.iter().enumerate().filter(|(_, &v)| v) {
            for a in 0..self.n_actions {
                for &t in &self.support[s * self.n_actions + a] {
                    out[t] = true;
                }
            }
        }
        out
    }

    /// Sample a successor from the posterior-mean row.
    pub fn sample<R: rand::Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        let i = s * self.n_actions + a;
        let p = self.mean_probs(i);
        self.support[i][crate::env::sample_index(&p, rng)]
    }
}
