use crate::env::Trajectory;
use crate::error::{invalid, Result};
use crate::potentials::RelayTable;

/// Hindsight relay update over every `(i, j)` pair with `j - i <= k`.
///
/// `s_j` is treated as the anchor for source `s_i`. Targets bootstrap from
/// the frozen `v_target` / `u_target` fields, never from the tables being
/// updated. The pragmatic table only moves upward (it estimates a maximum
/// over paths); the epistemic table moves toward each target.
#[allow(clippy::too_many_arguments)]
pub fn relay_her_update(
    rvf: &mut RelayTable,
    ruf: &mut RelayTable,
    trajectory: &Trajectory,
    v_target: &[f64],
    u_target: &[f64],
    k: usize,
    info: &[f64],
    gamma: f64,
    step_size: f64,
) -> Result<()> {
    if info.len() != trajectory.len() {
        return invalid("one info shock per transition is required");
    }
    if !(step_size > 0.0 && step_size <= 1.0) {
        return invalid(format!("step size must lie in (0,1], got {step_size}"));
    }
    let g2 = gamma * gamma;
    let states = &trajectory.states;
    let len = trajectory.len();
    for i in 0..=len {
        let source = states[i];
        let mut reward_sum = 0.0;
        let mut info_sum = 0.0;
        let mut disc = 1.0;
        let mut disc2 = 1.0;
        for j in i..=(i + k).min(len) {
            if j > i {
                reward_sum += disc * trajectory.rewards[j - 1];
                info_sum += disc2 * info[j - 1];
                disc *= gamma;
                disc2 *= g2;
            }
            let anchor = states[j];
            let pragmatic = reward_sum + disc * v_target[anchor];
            let epistemic = info_sum + disc2 * u_target[anchor];
            let cur = rvf.get(source, anchor);
            if pragmatic > cur {
                rvf.set(source, anchor, cur + step_size * (pragmatic - cur));
            }
            let cur = ruf.get(source, anchor);
            ruf.set(source, anchor, cur + step_size * (epistemic - cur));
        }
    }
    Ok(())
}

/// `targets <- (1 - fraction) targets + fraction live`.
pub fn targets_soft_update(live: &[f64], targets: &mut [f64], fraction: f64) {
    for (t, &l) in targets.iter_mut().zip(live) {
        *t = (1.0 - fraction) * *t + fraction * l;
    }
}

/// Applies soft updates every `period` ticks.
#[derive(Debug, Clone)]
pub struct TargetSchedule {
    period: usize,
    fraction: f64,
    ticks: usize,
}

impl TargetSchedule {
    pub fn new(period: usize, fraction: f64) -> Result<Self> {
        if period == 0 {
            return invalid("target update period must be at least one");
        }
        if !(fraction > 0.0 && fraction <= 1.0) {
            return invalid(format!("target fraction must lie in (0,1], got {fraction}"));
        }
        Ok(Self { period, fraction, ticks: 0 })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// Advances the clock; true when an update is due on this tick.
    pub fn tick(&mut self) -> bool {
        self.ticks += 1;
        self.ticks.is_multiple_of(self.period)
    }

    /// Advances the clock and updates every `(live, target)` pair when due.
    pub fn step(&mut self, pairs: &mut [(&[f64], &mut [f64])]) -> bool {
        let due = self.tick();
        if due {
            for (live, target) in pairs.iter_mut() {
                targets_soft_update(live, target, self.fraction);
            }
        }
        due
    }
}
