//! Conjugate beliefs over MDP parameters.
//!
//! Each `(s, a)` carries a Dirichlet over next states and a Normal belief over
//! the mean reward (known observation variance). Drawing one full MDP from
//! these beliefs is the Thompson step.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_discount, Error, Result};
use crate::mdp::TabularMdp;

/// Prior hyperparameters shared by every state-action pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Symmetric Dirichlet concentration.
    pub alpha0: f64,
    pub reward_mean: f64,
    pub reward_precision: f64,
    /// Assumed variance of a single reward observation.
    pub obs_noise_variance: f64,
    /// Sampled reward means are clipped into `[lo, hi]`.
    pub reward_bounds: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            reward_mean: 0.0,
            reward_precision: 1.0,
            obs_noise_variance: 0.25,
            reward_bounds: (-1.0, 1.0),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Dirichlet prior alpha0 must be positive, got {}",
                self.alpha0
            )));
        }
        if !(self.reward_precision > 0.0 && self.reward_precision.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "reward prior precision must be positive, got {}",
                self.reward_precision
            )));
        }
        if !(self.obs_noise_variance > 0.0 && self.obs_noise_variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "observation noise variance must be positive, got {}",
                self.obs_noise_variance
            )));
        }
        if !self.reward_mean.is_finite() {
            return Err(Error::InvalidInput(
                "reward prior mean is not finite".into(),
            ));
        }
        let (lo, hi) = self.reward_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidInput(format!(
                "reward bounds [{lo}, {hi}] are not an interval"
            )));
        }
        Ok(())
    }
}

/// Posterior over transitions and mean rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    n_states: usize,
    n_actions: usize,
    /// Indexed like [`TabularMdp::transitions`].
    dirichlet_alpha: Vec<f64>,
    reward_mean: Vec<f64>,
    reward_precision: Vec<f64>,
    prior: PriorConfig,
}

/// One MDP drawn from the posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledModel {
    pub mdp: TabularMdp,
    pub episode_index: usize,
}

impl PosteriorState {
    pub fn new(n_states: usize, n_actions: usize, prior: PriorConfig) -> Result<Self> {
        prior.validate()?;
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension(format!(
                "need at least one state and action, got {n_states}x{n_actions}"
            )));
        }
        let pairs = n_states * n_actions;
        Ok(Self {
            n_states,
            n_actions,
            dirichlet_alpha: vec![prior.alpha0; pairs * n_states],
            reward_mean: vec![prior.reward_mean; pairs],
            reward_precision: vec![prior.reward_precision; pairs],
            prior,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prior(&self) -> &PriorConfig {
        &self.prior
    }

    pub fn alpha(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.dirichlet_alpha[start..start + self.n_states]
    }

    /// Posterior (mean, precision) of the mean reward at `(s, a)`.
    pub fn reward_belief(&self, s: usize, a: usize) -> (f64, f64) {
        let i = s * self.n_actions + a;
        (self.reward_mean[i], self.reward_precision[i])
    }

    /// Number of transitions observed from `(s, a)`.
    pub fn observations(&self, s: usize, a: usize) -> f64 {
        self.alpha(s, a).iter().sum::<f64>() - self.prior.alpha0 * self.n_states as f64
    }

    fn check_index(&self, s: usize, a: usize, s_next: usize) -> Result<()> {
        if s >= self.n_states || s_next >= self.n_states || a >= self.n_actions {
            return Err(Error::Dimension(format!(
                "transition ({s}, {a}, {s_next}) is outside {}x{}",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Conjugate update with one observed transition and reward.
    pub fn observe(&mut self, s: usize, a: usize, s_next: usize, reward: f64) -> Result<()> {
        self.check_index(s, a, s_next)?;
        if !reward.is_finite() {
            return Err(Error::InvalidInput(format!(
                "reward {reward} is not finite"
            )));
        }
        let pair = s * self.n_actions + a;
        self.dirichlet_alpha[pair * self.n_states + s_next] += 1.0;
        let obs_precision = 1.0 / self.prior.obs_noise_variance;
        let precision = self.reward_precision[pair] + obs_precision;
        self.reward_mean[pair] = (self.reward_precision[pair] * self.reward_mean[pair]
            + obs_precision * reward)
            / precision;
        self.reward_precision[pair] = precision;
        Ok(())
    }

    fn clip(&self, r: f64) -> f64 {
        let (lo, hi) = self.prior.reward_bounds;
        r.clamp(lo, hi)
    }

    fn bounds_span(&self) -> f64 {
        self.prior.reward_bounds.1 - self.prior.reward_bounds.0
    }

    /// Draws every transition row from its Dirichlet and every mean reward from
    /// its Normal belief.
    pub fn sample_model<R: Rng + ?Sized>(
        &self,
        discount: f64,
        episode_index: usize,
        rng: &mut R,
    ) -> Result<SampledModel> {
        ensure_discount(discount)?;
        let mut transition = Vec::with_capacity(self.dirichlet_alpha.len());
        for row in self.dirichlet_alpha.chunks_exact(self.n_states) {
            let start = transition.len();
            for &alpha in row {
                let gamma = Gamma::new(alpha, 1.0)
                    .map_err(|e| Error::Numerical(format!("gamma({alpha}): {e}")))?;
                transition.push(gamma.sample(rng));
            }
            let drawn = &mut transition[start..];
            let total: f64 = drawn.iter().sum();
            if total > 0.0 && total.is_finite() {
                drawn.iter_mut().for_each(|x| *x /= total);
            } else {
                // Every gamma draw underflowed; fall back to the row mean.
                let alpha_total: f64 = row.iter().sum();
                drawn
                    .iter_mut()
                    .zip(row)
                    .for_each(|(x, a)| *x = a / alpha_total);
            }
        }
        let reward = self
            .reward_mean
            .iter()
            .zip(&self.reward_precision)
            .map(|(&mean, &precision)| {
                let z: f64 = StandardNormal.sample(rng);
                self.clip(mean + z / precision.sqrt())
            })
            .collect();
        let mdp = TabularMdp::new(
            self.n_states,
            self.n_actions,
            transition,
            reward,
            discount,
            self.bounds_span(),
        )?;
        Ok(SampledModel { mdp, episode_index })
    }

    /// Posterior-mean MDP. Reward means are clipped like sampled ones.
    pub fn expected_model(&self, discount: f64) -> Result<TabularMdp> {
        let mut transition = Vec::with_capacity(self.dirichlet_alpha.len());
        for row in self.dirichlet_alpha.chunks_exact(self.n_states) {
            let total: f64 = row.iter().sum();
            transition.extend(row.iter().map(|a| a / total));
        }
        let reward = self.reward_mean.iter().map(|&m| self.clip(m)).collect();
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            transition,
            reward,
            discount,
            self.bounds_span(),
        )
    }

    /// Serialises the full state, prior included.
    pub fn to_snapshot(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        state.prior.validate()?;
        let pairs = state.n_states * state.n_actions;
        if state.dirichlet_alpha.len() != pairs * state.n_states
            || state.reward_mean.len() != pairs
            || state.reward_precision.len() != pairs
        {
            return Err(Error::Snapshot(
                "table sizes disagree with dimensions".into(),
            ));
        }
        Ok(state)
    }
}
