//! The episodic TSEB control loop.
//!
//! Per episode: draw an MDP from the posterior, plan on it once with the
//! current bonus table, then act greedily for `horizon` steps. Counts,
//! empirical means and the bonus move after every step; the posterior absorbs
//! the episode's transitions at the end (or per step, if configured).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bonus::{
    f_global, f_state, initial_f0, k_r, BonusMode, BonusTable, CountTable, RunningMeans,
};
use crate::envs::Environment;
use crate::error::{ensure_discount, Error, Result};
use crate::mdp::{mixed_greedy_action, value_iteration, BonusWeights, PlannerConfig};
use crate::metrics::{pac_sample_bound, EpisodeMeasurement, MetricsTrace, PacQuery, RegretOracle};
use crate::posterior::{PosteriorState, PriorConfig};
use crate::rng::{self, SimRng};

/// Stream used for the f_0 Monte-Carlo probes, kept apart from the agent's
/// sampling stream so the diagnostic never perturbs a run.
const F0_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorCadence {
    PerStep,
    #[default]
    PerEpisode,
}

impl std::fmt::Display for PosteriorCadence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PosteriorCadence::PerStep => "per_step",
            PosteriorCadence::PerEpisode => "per_episode",
        })
    }
}

impl std::str::FromStr for PosteriorCadence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_step" => Ok(PosteriorCadence::PerStep),
            "per_episode" => Ok(PosteriorCadence::PerEpisode),
            other => Err(Error::InvalidInput(format!(
                "unknown posterior cadence {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// Weight on the sampled reward; `1 - lambda` goes to the bonus.
    pub lambda: f64,
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub bonus_mode: BonusMode,
    pub planner: PlannerConfig,
    pub cadence: PosteriorCadence,
    pub prior: PriorConfig,
    /// Reward range used by the global f-function.
    pub delta_r: f64,
    /// Range-change constant `c` in the convergence bounds.
    pub bound_c: f64,
    pub f0_probes: usize,
    pub pac: PacQuery,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            episodes: 1000,
            horizon: 100,
            gamma: 0.8,
            bonus_mode: BonusMode::default(),
            planner: PlannerConfig::default(),
            cadence: PosteriorCadence::default(),
            prior: PriorConfig::default(),
            delta_r: 2.0,
            bound_c: 2.0,
            f0_probes: 1000,
            pac: PacQuery::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidInput(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        ensure_discount(self.gamma)?;
        if self.planner.tol.is_nan() || self.planner.tol <= 0.0 || self.planner.max_iter == 0 {
            return Err(Error::InvalidInput(
                "planner needs tol > 0 and max_iter >= 1".into(),
            ));
        }
        self.prior.validate()?;
        if !(self.delta_r >= 0.0 && self.delta_r.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "delta_r must be nonnegative, got {}",
                self.delta_r
            )));
        }
        if !(self.bound_c > 0.0 && self.bound_c <= 2.0) {
            return Err(Error::InvalidInput(format!(
                "bound_c must lie in (0, 2], got {}",
                self.bound_c
            )));
        }
        if self.f0_probes == 0 {
            return Err(Error::InvalidInput("f0_probes must be at least 1".into()));
        }
        self.pac.validate()
    }
}

/// One observed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub r: f64,
}

/// Everything the agent carries between episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub posterior: PosteriorState,
    pub counts: CountTable,
    pub means: RunningMeans,
    pub bonus: BonusTable,
}

impl AgentState {
    pub fn new(n_states: usize, n_actions: usize, config: &AgentConfig) -> Result<Self> {
        Ok(Self {
            posterior: PosteriorState::new(n_states, n_actions, config.prior)?,
            counts: CountTable::new(n_states, n_actions),
            means: RunningMeans::new(n_states, n_actions),
            bonus: BonusTable::new(n_states, n_actions, config.bonus_mode),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub start_state: usize,
    pub transitions: Vec<Transition>,
    /// Sum of raw environment rewards.
    pub episode_return: f64,
    /// Largest per-pair gap between sampled and empirical mean reward at the
    /// start of the episode.
    pub k_r_max: f64,
    /// Global f-function with `k_r_max` and the post-episode `n_min`.
    pub f_value: f64,
    pub n_min: u64,
    pub planner_converged: bool,
}

impl EpisodeRecord {
    pub fn actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.transitions.iter().map(|t| t.a)
    }
}

/// Runs one TSEB episode from the environment's start state.
pub fn run_episode<E, R>(
    env: &mut E,
    state: &mut AgentState,
    config: &AgentConfig,
    episode: usize,
    rng: &mut R,
) -> Result<EpisodeRecord>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let (n_states, n_actions) = (env.n_states(), env.n_actions());
    if state.posterior.n_states() != n_states || state.posterior.n_actions() != n_actions {
        return Err(Error::Dimension(format!(
            "agent state is {}x{} but environment is {n_states}x{n_actions}",
            state.posterior.n_states(),
            state.posterior.n_actions()
        )));
    }
    let prior_mean = config.prior.reward_mean;
    let sampled = state.posterior.sample_model(config.gamma, episode, rng)?;
    let model = &sampled.mdp;

    let mut k_r_max = 0.0f64;
    for s in 0..n_states {
        for a in 0..n_actions {
            let gap = k_r(model.reward(s, a), state.means.mean_or(s, a, prior_mean));
            k_r_max = k_r_max.max(gap);
        }
    }
    if state.bonus.mode() == BonusMode::ParamDistance {
        let expected = state.posterior.expected_model(config.gamma)?;
        state.bonus.set_episode_distances(model, &expected)?;
    }

    let plan = value_iteration(
        model,
        &BonusWeights::new(config.lambda, state.bonus.rho().to_vec())?,
        config.planner,
    )?;
    let v = plan.values.as_slice();

    let start_state = env.reset();
    let mut transitions = Vec::with_capacity(config.horizon);
    let mut episode_return = 0.0;
    for _ in 0..config.horizon {
        let s = env.state();
        // The bonus moves within the episode; the planned values do not.
        let (a, _) = mixed_greedy_action(model, config.lambda, state.bonus.rho(), v, s);
        let step = env.step(a)?;
        state.counts.record(s, a, step.next_state)?;
        let gap = k_r(model.reward(s, a), state.means.mean_or(s, a, prior_mean));
        state.means.record(s, a, step.reward);
        let f = f_state(gap, config.gamma, state.counts.n_sa(s, a))?;
        state.bonus.update(s, a, f, &state.counts)?;
        if config.cadence == PosteriorCadence::PerStep {
            state
                .posterior
                .observe(s, a, step.next_state, step.reward)?;
        }
        episode_return += step.reward;
        transitions.push(Transition {
            s,
            a,
            s_next: step.next_state,
            r: step.reward,
        });
    }
    if config.cadence == PosteriorCadence::PerEpisode {
        for t in &transitions {
            state.posterior.observe(t.s, t.a, t.s_next, t.r)?;
        }
    }

    let n_min = state.counts.n_min();
    Ok(EpisodeRecord {
        episode,
        start_state,
        transitions,
        episode_return,
        k_r_max,
        f_value: f_global(k_r_max, config.gamma, n_min, config.delta_r)?,
        n_min,
        planner_converged: plan.converged,
    })
}

/// Runs `config.episodes` episodes with persistent beliefs and returns the
/// metrics trace. The environment is built from the seed's environment stream.
pub fn run_experiment<E, F>(make_env: F, config: &AgentConfig, seed: u64) -> Result<MetricsTrace>
where
    E: Environment,
    F: FnOnce(SimRng) -> Result<E>,
{
    run_experiment_with(make_env, config, seed, |_, _| {})
}

/// [`run_experiment`] with a callback seeing each episode record and the agent
/// state right after it.
pub fn run_experiment_with<E, F, O>(
    make_env: F,
    config: &AgentConfig,
    seed: u64,
    mut observe: O,
) -> Result<MetricsTrace>
where
    E: Environment,
    F: FnOnce(SimRng) -> Result<E>,
    O: FnMut(&EpisodeRecord, &AgentState),
{
    config.validate()?;
    let mut env = make_env(rng::stream(seed, rng::ENV_STREAM))?;
    let mut agent_rng = rng::stream(seed, rng::AGENT_STREAM);
    let (n_states, n_actions) = (env.n_states(), env.n_actions());
    let mut state = AgentState::new(n_states, n_actions, config)?;

    let f0 = initial_f0(
        &state.posterior,
        config.gamma,
        config.delta_r,
        config.f0_probes,
        &mut rng::stream(seed, F0_STREAM),
    )?;
    let pac_bound = pac_sample_bound(n_states, n_actions, f0, &config.pac);
    let mut trace = MetricsTrace::new(0, config.lambda, seed, f0, pac_bound);
    if config.episodes == 0 {
        return Ok(trace);
    }
    let oracle = RegretOracle::new(env.true_mdp(), config.horizon)?;

    for episode in 0..config.episodes {
        let record = run_episode(&mut env, &mut state, config, episode, &mut agent_rng)?;
        trace.push(
            EpisodeMeasurement {
                episode_return: record.episode_return,
                regret: oracle.regret(record.start_state, record.episode_return),
                f_value: record.f_value,
                k_r_max: record.k_r_max,
                n_min: record.n_min,
            },
            config.gamma,
            n_states,
            n_actions,
            config.bound_c,
        )?;
        observe(&record, &state);
    }
    Ok(trace)
}
