//! Per-episode measurements and the convergence / sample-complexity bounds.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_discount, Error, Result};
use crate::mdp::{finite_horizon_values, TabularMdp, ValueFunction};

/// Shortfall of an episode's return against the optimal expected
/// `horizon`-step return from `start_state`.
pub fn episode_regret(
    true_mdp: &TabularMdp,
    horizon: usize,
    start_state: usize,
    achieved_return: f64,
) -> Result<f64> {
    Ok(RegretOracle::new(true_mdp, horizon)?.regret(start_state, achieved_return))
}

/// Caches the finite-horizon optimum so regret can be evaluated per episode.
#[derive(Debug, Clone)]
pub struct RegretOracle {
    optimal: ValueFunction,
}

impl RegretOracle {
    pub fn new(true_mdp: &TabularMdp, horizon: usize) -> Result<Self> {
        Ok(Self {
            optimal: finite_horizon_values(true_mdp, horizon)?,
        })
    }

    pub fn optimal_return(&self, start_state: usize) -> f64 {
        self.optimal[start_state]
    }

    pub fn regret(&self, start_state: usize, achieved_return: f64) -> f64 {
        self.optimal[start_state] - achieved_return
    }
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "c must lie in (0, 2], got {c}"
        )))
    }
}

/// Bound on the summed per-pair reward-gap change:
/// `S * A * c * gamma / ((1 - gamma) * n_min)`.
pub fn tau_bound(n_min: u64, gamma: f64, n_states: usize, n_actions: usize, c: f64) -> Result<f64> {
    ensure_discount(gamma)?;
    check_c(c)?;
    Ok((n_states * n_actions) as f64 * c * gamma / ((1.0 - gamma) * n_min.max(1) as f64))
}

/// Bound on the per-step change of the f-function once the reward-gap change
/// is itself bounded by `c * gamma / ((1 - gamma) * n)`:
/// `4 * c * gamma / ((1 - gamma)^2 * n_min)`.
pub fn f_bound(n_min: u64, gamma: f64, c: f64) -> Result<f64> {
    ensure_discount(gamma)?;
    check_c(c)?;
    let h = 1.0 / (1.0 - gamma);
    Ok(2.0 * h * (2.0 * c * gamma * h / n_min.max(1) as f64))
}

/// Accuracy and confidence for the sample-complexity diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacQuery {
    pub epsilon: f64,
    pub delta: f64,
}

impl PacQuery {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let q = Self { epsilon, delta };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

impl Default for PacQuery {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            delta: 0.05,
        }
    }
}

/// `4 * S * A * f0 * ln(1 / delta) / epsilon^2`.
pub fn pac_sample_bound(n_states: usize, n_actions: usize, f0: f64, query: &PacQuery) -> f64 {
    4.0 * (n_states * n_actions) as f64 * f0 * (1.0 / query.delta).ln()
        / (query.epsilon * query.epsilon)
}

/// One episode's measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run_id: u64,
    pub lambda: f64,
    pub episode: usize,
    pub episode_return: f64,
    pub cumulative_reward: f64,
    pub f_value: f64,
    pub f_bound: f64,
    pub avg_regret: f64,
    pub n_min: u64,
    pub tau_bound: f64,
    pub regret: f64,
    pub k_r_max: f64,
}

/// Everything measured during one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub run_id: u64,
    pub lambda: f64,
    pub seed: u64,
    /// Expected initial f-value under the prior.
    pub f0: f64,
    pub pac_bound: f64,
    pub rows: Vec<TraceRow>,
}

/// Raw per-episode inputs to [`MetricsTrace::push`].
#[derive(Debug, Clone, Copy)]
pub struct EpisodeMeasurement {
    pub episode_return: f64,
    pub regret: f64,
    pub f_value: f64,
    pub k_r_max: f64,
    pub n_min: u64,
}

impl MetricsTrace {
    pub fn new(run_id: u64, lambda: f64, seed: u64, f0: f64, pac_bound: f64) -> Self {
        Self {
            run_id,
            lambda,
            seed,
            f0,
            pac_bound,
            rows: Vec::new(),
        }
    }

    /// Appends a row, deriving the running aggregates and bounds.
    pub fn push(
        &mut self,
        m: EpisodeMeasurement,
        gamma: f64,
        n_states: usize,
        n_actions: usize,
        c: f64,
    ) -> Result<()> {
        let episode = self.rows.len();
        let (cumulative, regret_total) = self
            .rows
            .last()
            .map(|r| (r.cumulative_reward, r.avg_regret * episode as f64))
            .unwrap_or((0.0, 0.0));
        let row = TraceRow {
            run_id: self.run_id,
            lambda: self.lambda,
            episode,
            episode_return: m.episode_return,
            cumulative_reward: cumulative + m.episode_return,
            f_value: m.f_value,
            f_bound: f_bound(m.n_min, gamma, c)?,
            avg_regret: (regret_total + m.regret) / (episode + 1) as f64,
            n_min: m.n_min,
            tau_bound: tau_bound(m.n_min, gamma, n_states, n_actions, c)?,
            regret: m.regret,
            k_r_max: m.k_r_max,
        };
        self.rows.push(row);
        Ok(())
    }

    /// Relabels the trace and all of its rows with `run_id`.
    pub fn with_run_id(mut self, run_id: u64) -> Self {
        self.run_id = run_id;
        for row in &mut self.rows {
            row.run_id = run_id;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_cumulative_reward(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_reward)
    }

    pub fn summary(&self) -> RunSummary {
        let last = self.rows.last();
        RunSummary {
            run_id: self.run_id,
            seed: self.seed,
            lambda: self.lambda,
            episodes: self.rows.len(),
            final_cumulative_reward: self.final_cumulative_reward(),
            mean_regret: last.map_or(0.0, |r| r.avg_regret),
            final_f_value: last.map_or(f64::NAN, |r| r.f_value),
            f0: self.f0,
            pac_bound: self.pac_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: u64,
    pub seed: u64,
    pub lambda: f64,
    pub episodes: usize,
    pub final_cumulative_reward: f64,
    pub mean_regret: f64,
    pub final_f_value: f64,
    pub f0: f64,
    pub pac_bound: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean of the values in the window `[from, to)` expressed as fractions of the
/// slice length, e.g. `window_mean(xs, 0.9, 1.0)` for the final decile.
pub fn window_mean(xs: &[f64], from: f64, to: f64) -> f64 {
    let n = xs.len();
    let lo = ((n as f64 * from).floor() as usize).min(n);
    let hi = ((n as f64 * to).ceil() as usize).clamp(lo, n);
    let slice = &xs[lo..hi];
    slice.iter().sum::<f64>() / slice.len() as f64
}
