use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};

use super::generator::{expected_contrastive_update, manifold_loss, psi_row, sample_anchor, AnchorGenerator, ElitePool};
use super::her::{relay_her_update, TargetSchedule};
use super::world_model::WorldModelCounts;
use super::{AgentConfig, Mode, RunResult, SourceChoice};
use crate::env::{Buffer, Task, Trajectory};
use crate::error::Result;
use crate::potentials::{RelayKind, RelayTable};
use crate::rng::StreamRng;

/// Relay machinery that only the generator mode carries.
struct RelayState {
    rvf: RelayTable,
    ruf: RelayTable,
    rvf_target: RelayTable,
    ruf_target: RelayTable,
    v_target: Vec<f64>,
    u_target: Vec<f64>,
    generator: AnchorGenerator,
    elite: ElitePool,
    schedule: TargetSchedule,
    last_psi: Option<Vec<f64>>,
}

struct Learner<'a> {
    task: &'a Task,
    cfg: &'a AgentConfig,
    wm: WorldModelCounts,
    q: Vec<f64>,
    u: Vec<f64>,
}

impl Learner<'_> {
    fn n_actions(&self) -> usize {
        self.wm.n_actions()
    }

    fn state_value(&self, s: usize) -> f64 {
        let a = self.n_actions();
        self.q[s * a..(s + 1) * a].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn values(&self) -> Vec<f64> {
        (0..self.wm.n_states()).map(|s| self.state_value(s)).collect()
    }

    /// Epsilon-greedy with uniform tie breaking.
    fn act<R: Rng + ?Sized>(&self, s: usize, epsilon: f64, rng: &mut R) -> usize {
        let a_n = self.n_actions();
        if rng.random::<f64>() < epsilon {
            return rng.random_range(0..a_n);
        }
        let row = &self.q[s * a_n..(s + 1) * a_n];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties = row.iter().filter(|&&x| x >= best - 1e-12).count();
        let mut pick = rng.random_range(0..ties);
        for (a, &x) in row.iter().enumerate() {
            if x >= best - 1e-12 {
                if pick == 0 {
                    return a;
                }
                pick -= 1;
            }
        }
        unreachable!("at least one action attains the maximum")
    }

    /// Full expected backup of `Q(s, a)` under the posterior-mean model.
    fn model_backup(&mut self, s: usize, a: usize) {
        let gamma = self.task.mdp.gamma();
        let next: f64 = self
            .wm
            .mean_row(s, a)
            .iter()
            .map(|&(t, p)| p * self.state_value(t))
            .sum();
        let target = self.wm.reward(s, a) + self.cfg.intrinsic_weight * self.wm.info_gain(s, a) + gamma * next;
        let a_n = self.n_actions();
        self.q[s * a_n + a] = target;
        let g2 = gamma * gamma;
        let u_next = self.wm.expect(s, a, &self.u);
        let u_target = self.wm.info_gain(s, a) + g2 * u_next;
        self.u[s] += self.cfg.q_step * (u_target - self.u[s]);
    }

    fn imagine<R: Rng + ?Sized>(&mut self, start: usize, rng: &mut R) -> (Trajectory, Vec<f64>) {
        let mut traj = Trajectory::start(start);
        let mut infos = Vec::with_capacity(self.cfg.imagination_horizon);
        let mut s = start;
        for _ in 0..self.cfg.imagination_horizon {
            let a = self.act(s, self.cfg.imagination_epsilon, rng);
            self.model_backup(s, a);
            let next = self.wm.sample(s, a, rng);
            infos.push(self.wm.info_gain(s, a));
            traj.push(a, self.wm.reward(s, a), next);
            s = next;
        }
        (traj, infos)
    }
}

/// Runs one seeded training run and records first-hit and return curves.
pub fn train<R: Rng + ?Sized>(task: &Task, mode: Mode, config: &AgentConfig, rng: &mut R) -> Result<RunResult> {
    config.validate()?;
    // Environment noise gets its own stream with one draw per real step, so
    // runs that share a seed see the same transition noise in both modes.
    let mut env_rng = StreamRng::seed_from_u64(rng.random());
    let n = task.mdp.n_states();
    let a_n = task.mdp.n_actions();
    let gamma = task.mdp.gamma();
    let goal = task.in_goal();
    let mut wm = WorldModelCounts::new(&task.mdp, config.pseudocount)?;
    if config.known_rewards {
        wm = wm.with_known_rewards(&task.mdp)?;
    }
    let mut learner = Learner {
        task,
        cfg: config,
        wm,
        q: vec![0.0; n * a_n],
        u: vec![0.0; n],
    };
    // Unseen (source, anchor) pairs start at the largest uncertainty the
    // prior allows; hindsight updates pull observed pairs down.
    let u_prior = (0..n * a_n).map(|i| learner.wm.info_gain(i / a_n, i % a_n)).fold(0.0, f64::max)
        / (1.0 - gamma * gamma);
    let mut relay = match mode {
        Mode::Baseline => None,
        Mode::Generator => Some(RelayState {
            rvf: RelayTable::filled(n, RelayKind::Pragmatic, 0.0),
            ruf: RelayTable::filled(n, RelayKind::Epistemic, u_prior),
            rvf_target: RelayTable::filled(n, RelayKind::Pragmatic, 0.0),
            ruf_target: RelayTable::filled(n, RelayKind::Epistemic, u_prior),
            v_target: vec![0.0; n],
            u_target: vec![u_prior; n],
            generator: AnchorGenerator::new(n, config.generator)?,
            elite: ElitePool::new(config.elite_capacity),
            schedule: TargetSchedule::new(config.target_update_period, config.target_update_fraction)?,
            last_psi: None,
        }),
    };
    let mut buffer = Buffer::new(n);
    let mut visited = vec![false; n];
    visited[task.start] = true;
    let mut total_steps = 0u64;
    let mut first_hit = if goal[task.start] { Some(0) } else { None };
    let mut return_curve = Vec::with_capacity(config.episodes);
    let mut anchor_history = Vec::with_capacity(config.episodes);
    let mut metrics: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for _ in 0..config.episodes {
        let starts: Vec<usize> = match relay.as_mut() {
            Some(rs) => generator_phase(rs, &learner, &buffer, &visited, &goal, task.start, config, &mut metrics, rng)?,
            None => (0..config.rollouts_per_episode)
                .map(|_| buffer.sample_state(rng).unwrap_or(task.start))
                .collect(),
        };
        if config.imagination_horizon > 0 {
            for &s0 in &starts {
                let (traj, infos) = learner.imagine(s0, rng);
                if let Some(rs) = relay.as_mut() {
                    relay_her_update(
                        &mut rs.rvf, &mut rs.ruf, &traj, &rs.v_target, &rs.u_target,
                        config.relay_horizon, &infos, gamma, config.her_step,
                    )?;
                }
            }
        }
        anchor_history.push(starts);

        let mut traj = Trajectory::start(task.start);
        let mut infos = Vec::with_capacity(config.episode_length);
        let mut s = task.start;
        let mut ret = 0.0;
        for _ in 0..config.episode_length {
            let a = learner.act(s, config.epsilon, rng);
            let next = task.mdp.step_with(s, a, env_rng.random());
            let r = task.mdp.reward(s, a);
            let info = learner.wm.info_gain(s, a);
            learner.wm.observe(s, a, r, next);
            let target = r + config.intrinsic_weight * info + gamma * learner.state_value(next);
            let qa = &mut learner.q[s * a_n + a];
            *qa += config.q_step * (target - *qa);
            buffer.push(crate::env::Transition { state: s, action: a, reward: r, next });
            traj.push(a, r, next);
            infos.push(info);
            visited[next] = true;
            total_steps += 1;
            ret += r;
            if first_hit.is_none() && goal[next] {
                first_hit = Some(total_steps);
            }
            s = next;
        }
        if let Some(rs) = relay.as_mut() {
            relay_her_update(
                &mut rs.rvf, &mut rs.ruf, &traj, &rs.v_target, &rs.u_target,
                config.relay_horizon, &infos, gamma, config.her_step,
            )?;
        }
        return_curve.push(ret);
        metrics.entry("visited_states".into()).or_default().push(visited.iter().filter(|&&v| v).count() as f64);
    }

    Ok(RunResult {
        mode,
        seed: config.seed,
        first_hit_step: first_hit,
        censored: first_hit.is_none(),
        total_steps,
        return_curve,
        anchor_history,
        metric_series: metrics,
    })
}

/// Target refresh, contrastive generator updates and anchor sampling.
#[allow(clippy::too_many_arguments)]
fn generator_phase<R: Rng + ?Sized>(
    rs: &mut RelayState,
    learner: &Learner<'_>,
    buffer: &Buffer,
    visited: &[bool],
    goal: &[bool],
    current: usize,
    cfg: &AgentConfig,
    metrics: &mut BTreeMap<String, Vec<f64>>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if rs.schedule.tick() {
        let f = rs.schedule.fraction();
        super::targets_soft_update(&learner.values(), &mut rs.v_target, f);
        super::targets_soft_update(&learner.u, &mut rs.u_target, f);
        soft_update_table(&rs.rvf, &mut rs.rvf_target, f);
        soft_update_table(&rs.ruf, &mut rs.ruf_target, f);
    }
    let n = visited.len();
    let reachable = learner.wm.reachable(visited);
    let mf: Vec<f64> = (0..n).map(|s| manifold_loss(s, &learner.wm, &reachable)).collect();
    let (eta, beta) = (rs.generator.eta, rs.generator.beta);
    let mut loss_sum = 0.0;
    let mut change_sum = 0.0;
    for _ in 0..cfg.generator_update_ratio {
        let source = match cfg.source {
            SourceChoice::Current => current,
            SourceChoice::Buffer => buffer.sample_state(rng).unwrap_or(current),
        };
        let psi = psi_row(&rs.rvf_target, &rs.ruf_target, source, eta, beta);
        if let Some(prev) = &rs.last_psi {
            change_sum += prev.iter().zip(&psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        }
        rs.elite.rescore(&psi);
        let mut negatives: Vec<usize> =
            (0..cfg.negatives).map(|_| buffer.sample_state(rng).unwrap_or(current)).collect();
        negatives.extend(rs.elite.states());
        loss_sum += expected_contrastive_update(&mut rs.generator, &negatives, &psi, &mf)?;
        let drawn = sample_anchor(&rs.generator, rng);
        rs.elite.offer(drawn, psi[drawn]);
        rs.last_psi = Some(psi);
    }
    let ratio = cfg.generator_update_ratio as f64;
    metrics.entry("generator_loss".into()).or_default().push(loss_sum / ratio);
    metrics.entry("psi_change".into()).or_default().push(change_sum / ratio);
    let unreachable: Vec<bool> = reachable.iter().map(|r| !r).collect();
    metrics.entry("unreachable_mass".into()).or_default().push(rs.generator.mass_on(&unreachable));
    metrics.entry("goal_mass".into()).or_default().push(rs.generator.mass_on(goal));
    Ok((0..cfg.rollouts_per_episode).map(|_| sample_anchor(&rs.generator, rng)).collect())
}

fn soft_update_table(live: &RelayTable, target: &mut RelayTable, fraction: f64) {
    let n = live.n();
    for s in 0..n {
        for g in 0..n {
            let t = target.get(s, g);
            target.set(s, g, (1.0 - fraction) * t + fraction * live.get(s, g));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::IslandSpec;
    use crate::rng::seeded;

    #[test]
    fn pure_q_learning_smoke() {
        let task = Task::island(&IslandSpec { epsilon: 0.2, size_a: 4, size_b: 3 }).unwrap();
        let cfg = AgentConfig { imagination_horizon: 0, episodes: 5, episode_length: 20, ..Default::default() };
        let r = train(&task, Mode::Baseline, &cfg, &mut seeded(1)).unwrap();
        assert_eq!(r.return_curve.len(), 5);
        assert!(r.return_curve.iter().all(|x| x.is_finite()));
        assert_eq!(r.total_steps, 100);
    }

    #[test]
    fn same_seed_same_result() {
        let task = Task::island(&IslandSpec { epsilon: 0.1, size_a: 5, size_b: 3 }).unwrap();
        let cfg = AgentConfig { episodes: 6, episode_length: 15, rollouts_per_episode: 4, ..Default::default() };
        for mode in Mode::ALL {
            let a = train(&task, mode, &cfg, &mut seeded(9)).unwrap();
            let b = train(&task, mode, &cfg, &mut seeded(9)).unwrap();
            assert_eq!(a, b);
        }
    }
}
