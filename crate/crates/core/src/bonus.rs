//! Visit statistics and the adaptive exploration bonus.
//!
//! The f-function bounds how far the values of a sampled MDP can sit from the
//! true ones given the reward gap `K_r` and the visit counts. Dividing it by
//! the visit count gives the bonus `rho(s, a)` that the planner mixes into the
//! reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_discount, Error, Result};
use crate::posterior::PosteriorState;

/// Visit counts. All tables only grow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    n_states: usize,
    n_actions: usize,
    n_sa: Vec<u64>,
    n_sas: Vec<u64>,
    n_s: Vec<u64>,
}

impl CountTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            n_sa: vec![0; n_states * n_actions],
            n_sas: vec![0; n_states * n_actions * n_states],
            n_s: vec![0; n_states],
        }
    }

    pub fn record(&mut self, s: usize, a: usize, s_next: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions || s_next >= self.n_states {
            return Err(Error::Dimension(format!(
                "visit ({s}, {a}, {s_next}) is outside {}x{}",
                self.n_states, self.n_actions
            )));
        }
        let pair = s * self.n_actions + a;
        self.n_sa[pair] += 1;
        self.n_sas[pair * self.n_states + s_next] += 1;
        self.n_s[s] += 1;
        Ok(())
    }

    pub fn n_sa(&self, s: usize, a: usize) -> u64 {
        self.n_sa[s * self.n_actions + a]
    }

    pub fn n_sas(&self, s: usize, a: usize, s_next: usize) -> u64 {
        self.n_sas[(s * self.n_actions + a) * self.n_states + s_next]
    }

    pub fn n_s(&self, s: usize) -> u64 {
        self.n_s[s]
    }

    /// Smallest visit count over all state-action pairs.
    pub fn n_min(&self) -> u64 {
        self.n_sa.iter().copied().min().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.n_s.iter().sum()
    }
}

/// Incremental empirical reward means per `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMeans {
    n_actions: usize,
    r_hat: Vec<f64>,
    count: Vec<u64>,
}

impl RunningMeans {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_actions,
            r_hat: vec![0.0; n_states * n_actions],
            count: vec![0; n_states * n_actions],
        }
    }

    pub fn record(&mut self, s: usize, a: usize, reward: f64) {
        let i = s * self.n_actions + a;
        self.count[i] += 1;
        self.r_hat[i] += (reward - self.r_hat[i]) / self.count[i] as f64;
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.count[s * self.n_actions + a]
    }

    /// Empirical mean, or `None` before the first observation.
    pub fn mean(&self, s: usize, a: usize) -> Option<f64> {
        let i = s * self.n_actions + a;
        (self.count[i] > 0).then_some(self.r_hat[i])
    }

    pub fn mean_or(&self, s: usize, a: usize, fallback: f64) -> f64 {
        self.mean(s, a).unwrap_or(fallback)
    }
}

/// Reward gap between the sampled mean reward and the empirical one.
pub fn k_r(sampled_reward: f64, empirical_mean: f64) -> f64 {
    (sampled_reward - empirical_mean).abs()
}

/// Global f-function: `2/(1-g) * [K_r + g/(1-g) * delta_r / n_min]`.
///
/// `n_min = 0` is treated as 1.
pub fn f_global(k_r_max: f64, gamma: f64, n_min: u64, delta_r: f64) -> Result<f64> {
    ensure_discount(gamma)?;
    if delta_r.is_nan() || delta_r < 0.0 {
        return Err(Error::InvalidInput(format!(
            "reward range must be nonnegative, got {delta_r}"
        )));
    }
    let h = 1.0 / (1.0 - gamma);
    Ok(2.0 * h * (k_r_max + gamma * h * delta_r / n_min.max(1) as f64))
}

/// Per-pair f-function in the normalised-reward form (`delta_r = 2`).
pub fn f_state(k_r_sa: f64, gamma: f64, n_sa: u64) -> Result<f64> {
    ensure_discount(gamma)?;
    let h = 1.0 / (1.0 - gamma);
    Ok(2.0 * h * (k_r_sa + 2.0 * gamma * h / n_sa.max(1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BonusMode {
    /// `rho <- (rho + f) / n`, applied on every visit.
    #[default]
    Recurrence,
    /// `rho <- f / n`.
    Direct,
    /// Running mean of the L1 distance between sampled and posterior-mean
    /// parameters of the pair.
    ParamDistance,
}

impl std::fmt::Display for BonusMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BonusMode::Recurrence => "recurrence",
            BonusMode::Direct => "direct",
            BonusMode::ParamDistance => "param_distance",
        })
    }
}

impl std::str::FromStr for BonusMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recurrence" => Ok(BonusMode::Recurrence),
            "direct" => Ok(BonusMode::Direct),
            "param_distance" => Ok(BonusMode::ParamDistance),
            other => Err(Error::InvalidInput(format!("unknown bonus mode {other:?}"))),
        }
    }
}

/// Exploration bonus per `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonusTable {
    mode: BonusMode,
    n_actions: usize,
    rho: Vec<f64>,
    /// Param-distance mode: sum of per-visit distances.
    distance_sum: Vec<f64>,
    /// Param-distance mode: this episode's sampled-vs-mean distance.
    episode_distance: Vec<f64>,
}

impl BonusTable {
    pub fn new(n_states: usize, n_actions: usize, mode: BonusMode) -> Self {
        let pairs = n_states * n_actions;
        Self {
            mode,
            n_actions,
            rho: vec![0.0; pairs],
            distance_sum: vec![0.0; pairs],
            episode_distance: vec![0.0; pairs],
        }
    }

    pub fn mode(&self) -> BonusMode {
        self.mode
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rho_at(&self, s: usize, a: usize) -> f64 {
        self.rho[s * self.n_actions + a]
    }

    /// Records the per-pair L1 distance `|E[theta] - theta'|` (mean reward plus
    /// transition row) between a sampled model and the posterior mean.
    pub fn set_episode_distances(
        &mut self,
        sampled: &crate::mdp::TabularMdp,
        expected: &crate::mdp::TabularMdp,
    ) -> Result<()> {
        if sampled.n_states() != expected.n_states()
            || sampled.n_actions() != expected.n_actions()
            || sampled.n_states() * sampled.n_actions() != self.rho.len()
        {
            return Err(Error::Dimension(
                "sampled and expected models disagree with the bonus table".into(),
            ));
        }
        for s in 0..sampled.n_states() {
            for a in 0..sampled.n_actions() {
                let row: f64 = sampled
                    .row(s, a)
                    .iter()
                    .zip(expected.row(s, a))
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                let reward = (sampled.reward(s, a) - expected.reward(s, a)).abs();
                self.episode_distance[s * self.n_actions + a] = row + reward;
            }
        }
        Ok(())
    }

    /// Applies one bonus update after a visit to `(s, a)`; the count for this
    /// visit must already be recorded.
    pub fn update(&mut self, s: usize, a: usize, f_value: f64, counts: &CountTable) -> Result<()> {
        let n = counts.n_sa(s, a);
        if n == 0 {
            return Err(Error::Contract(format!(
                "bonus update at ({s}, {a}) before its visit was counted"
            )));
        }
        if !(f_value.is_finite() && f_value >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "f value {f_value} is not a finite nonnegative number"
            )));
        }
        let i = s * self.n_actions + a;
        let n = n as f64;
        self.rho[i] = match self.mode {
            BonusMode::Recurrence => (self.rho[i] + f_value) / n,
            BonusMode::Direct => f_value / n,
            BonusMode::ParamDistance => {
                self.distance_sum[i] += self.episode_distance[i];
                self.distance_sum[i] / n
            }
        };
        Ok(())
    }
}

/// Monte-Carlo estimate of the prior's expected initial f-value.
///
/// Each probe draws mean rewards from the posterior, takes the largest gap to
/// the prior mean as `K_r`, and evaluates [`f_global`] at `n_min = 1`.
pub fn initial_f0<R: Rng + ?Sized>(
    posterior: &PosteriorState,
    gamma: f64,
    delta_r: f64,
    n_probe: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(initial_f0_samples(posterior, gamma, delta_r, n_probe, rng)?
        .iter()
        .sum::<f64>()
        / n_probe as f64)
}

/// The individual probe values behind [`initial_f0`].
pub fn initial_f0_samples<R: Rng + ?Sized>(
    posterior: &PosteriorState,
    gamma: f64,
    delta_r: f64,
    n_probe: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_probe == 0 {
        return Err(Error::InvalidInput("n_probe must be at least 1".into()));
    }
    let prior_mean = posterior.prior().reward_mean;
    (0..n_probe)
        .map(|i| {
            let sample = posterior.sample_model(gamma, i, rng)?;
            let gap = sample
                .mdp
                .rewards()
                .iter()
                .map(|&r| k_r(r, prior_mean))
                .fold(0.0, f64::max);
            f_global(gap, gamma, 1, delta_r)
        })
        .collect()
}
