use rand::Rng;
use serde::{Deserialize, Serialize};

use super::world_model::WorldModelCounts;
use crate::env::sample_index;
use crate::error::{invalid, Result};
use crate::potentials::RelayTable;

/// Unconditional categorical distribution over anchor states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorGenerator {
    pub logits: Vec<f64>,
    pub eta: f64,
    pub beta: f64,
    pub lambda_mf: f64,
    pub margin: f64,
    pub temperature: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub eta: f64,
    pub beta: f64,
    pub lambda_mf: f64,
    pub margin: f64,
    pub temperature: f64,
    pub step_size: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self { eta: 1.0, beta: 1.0, lambda_mf: 1.0, margin: 0.1, temperature: 0.5, step_size: 0.5 }
    }
}

impl AnchorGenerator {
    pub fn new(n_states: usize, params: GeneratorParams) -> Result<Self> {
        let GeneratorParams { eta, beta, lambda_mf, margin, temperature, step_size } = params;
        if n_states == 0 {
            return invalid("generator needs at least one state");
        }
        for (name, x) in [("eta", eta), ("beta", beta), ("lambda_mf", lambda_mf), ("margin", margin)] {
            if !(x >= 0.0 && x.is_finite()) {
                return invalid(format!("{name} must be finite and non-negative, got {x}"));
            }
        }
        if !(temperature > 0.0 && temperature.is_finite()) || !(step_size > 0.0 && step_size.is_finite()) {
            return invalid("temperature and step size must be positive");
        }
        Ok(Self { logits: vec![0.0; n_states], eta, beta, lambda_mf, margin, temperature, step_size })
    }

    /// `softmax(logits / temperature)`.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.logits.iter().map(|&l| ((l - max) / self.temperature).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Mass on states flagged in `mask`.
    pub fn mass_on(&self, mask: &[bool]) -> f64 {
        self.probabilities().iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).sum()
    }
}

pub fn psi_score(anchor: usize, rvf: &RelayTable, ruf: &RelayTable, source: usize, eta: f64, beta: f64) -> f64 {
    eta * rvf.get(source, anchor) + beta * ruf.get(source, anchor)
}

/// Scores of every anchor for one source.
pub fn psi_row(rvf: &RelayTable, ruf: &RelayTable, source: usize, eta: f64, beta: f64) -> Vec<f64> {
    rvf.row(source).iter().zip(ruf.row(source)).map(|(v, u)| eta * v + beta * u).collect()
}

/// Mean transition entropy at the anchor plus one if it is off the reachable support.
pub fn manifold_loss(anchor: usize, wm: &WorldModelCounts, reachable: &[bool]) -> f64 {
    wm.mean_entropy(anchor) + if reachable[anchor] { 0.0 } else { 1.0 }
}

/// Hinge loss of `positive` against the best negative plus the manifold term.
pub fn contrastive_loss(gen: &AnchorGenerator, positive: usize, negatives: &[usize], psi: &[f64], mf: &[f64]) -> f64 {
    let best_neg = negatives.iter().map(|&s| psi[s]).fold(f64::NEG_INFINITY, f64::max);
    (gen.margin - (psi[positive] - best_neg)).max(0.0) + gen.lambda_mf * mf[positive]
}

/// One score-function step on the logits, weighted by the contrastive loss.
///
/// The positive is treated as a draw from the generator, so the step
/// `-step * loss * d log p(positive) / d logits` lowers the probability of
/// costly anchors and leaves the generator untouched when the loss is zero.
pub fn contrastive_update(
    gen: &mut AnchorGenerator,
    positive: usize,
    negatives: &[usize],
    psi: &[f64],
    mf: &[f64],
) -> Result<f64> {
    if negatives.is_empty() {
        return invalid("contrastive update needs at least one negative");
    }
    let loss = contrastive_loss(gen, positive, negatives, psi, mf);
    if loss > 0.0 {
        let p = gen.probabilities();
        let scale = gen.step_size * loss / gen.temperature;
        for (j, l) in gen.logits.iter_mut().enumerate() {
            let indicator = if j == positive { 1.0 } else { 0.0 };
            *l -= scale * (indicator - p[j]);
        }
    }
    Ok(loss)
}

/// Expected-loss step over all candidate positives at once.
///
/// Every state is scored as a positive against the same negatives. The
/// logits move a fraction `step_size` of the way toward `-loss`, a proximal
/// step on `E_p[loss] - T H(p)` whose fixed point is `p ∝ exp(-loss / T)`.
/// Unlike the single-sample rule this cannot saturate on a stale mode when
/// the landscape moves. Returns the expected loss under the old generator.
pub fn expected_contrastive_update(
    gen: &mut AnchorGenerator,
    negatives: &[usize],
    psi: &[f64],
    mf: &[f64],
) -> Result<f64> {
    if negatives.is_empty() {
        return invalid("contrastive update needs at least one negative");
    }
    let best_neg = negatives.iter().map(|&s| psi[s]).fold(f64::NEG_INFINITY, f64::max);
    let losses: Vec<f64> = psi
        .iter()
        .zip(mf)
        .map(|(&v, &m)| (gen.margin - (v - best_neg)).max(0.0) + gen.lambda_mf * m)
        .collect();
    let p = gen.probabilities();
    let mean: f64 = p.iter().zip(&losses).map(|(p, l)| p * l).sum();
    let step = gen.step_size.min(1.0);
    for (l, &lj) in gen.logits.iter_mut().zip(&losses) {
        *l += step * (-lj - *l);
    }
    Ok(mean)
}

pub fn sample_anchor<R: Rng + ?Sized>(gen: &AnchorGenerator, rng: &mut R) -> usize {
    sample_index(&gen.probabilities(), rng)
}

/// Highest-scoring historical anchors.
#[derive(Debug, Clone, Default)]
pub struct ElitePool {
    capacity: usize,
    members: Vec<(usize, f64)>,
}

impl ElitePool {
    pub const DEFAULT_CAPACITY: usize = 32;

    pub fn new(capacity: usize) -> Self {
        Self { capacity, members: Vec::new() }
    }

    /// Inserts or refreshes `state`, evicting the weakest member when full.
    pub fn offer(&mut self, state: usize, score: f64) {
        if let Some(m) = self.members.iter_mut().find(|m| m.0 == state) {
            m.1 = score;
        } else if self.members.len() < self.capacity {
            self.members.push((state, score));
        } else if let Some(worst) = self.members.iter_mut().min_by(|a, b| a.1.total_cmp(&b.1)) {
            if score > worst.1 {
                *worst = (state, score);
            }
        }
    }

    /// Re-scores members against a new landscape.
    pub fn rescore(&mut self, psi: &[f64]) {
        for m in &mut self.members {
            m.1 = psi[m.0];
        }
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|m| m.0)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::RelayKind;
    use crate::rng::seeded;

    fn gen(n: usize) -> AnchorGenerator {
        AnchorGenerator::new(n, GeneratorParams { lambda_mf: 0.0, margin: 0.5, ..Default::default() }).unwrap()
    }

    #[test]
    fn psi_examples() {
        let mut rvf = RelayTable::filled(3, RelayKind::Pragmatic, 0.0);
        let mut ruf = RelayTable::filled(3, RelayKind::Epistemic, 0.0);
        assert_eq!(psi_score(2, &rvf, &ruf, 0, 1.0, 1.0), 0.0);
        rvf.set(0, 2, 8.1);
        ruf.set(0, 2, 0.5);
        assert!((psi_score(2, &rvf, &ruf, 0, 1.0, 1.0) - 8.6).abs() < 1e-12);
        assert_eq!(psi_score(2, &rvf, &ruf, 0, 2.0, 0.0), 16.2);
    }

    #[test]
    fn hinge_arithmetic() {
        let mut g = gen(3);
        let psi = [1.0, 2.0, 0.0];
        let loss = contrastive_update(&mut g, 0, &[1, 2], &psi, &[0.0; 3]).unwrap();
        assert!((loss - 1.5).abs() < 1e-12);
        assert!(g.logits[0] < 0.0);
    }

    #[test]
    fn satisfied_margin_leaves_logits() {
        let mut g = gen(3);
        let before = g.clone();
        let loss = contrastive_update(&mut g, 1, &[0, 2], &[0.0, 3.0, 1.0], &[0.0; 3]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g, before);
    }

    #[test]
    fn empty_negatives_rejected() {
        assert!(contrastive_update(&mut gen(2), 0, &[], &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn cold_sampling_picks_argmax() {
        let mut g = gen(4);
        g.logits = vec![0.1, 0.9, 0.3, 0.2];
        g.temperature = 1e-6;
        let mut rng = seeded(3);
        assert!((0..100).all(|_| sample_anchor(&g, &mut rng) == 1));
    }

    #[test]
    fn elite_pool_keeps_best() {
        let mut pool = ElitePool::new(2);
        pool.offer(0, 1.0);
        pool.offer(1, 3.0);
        pool.offer(2, 2.0);
        let mut s: Vec<_> = pool.states().collect();
        s.sort();
        assert_eq!(s, vec![1, 2]);
    }
}
