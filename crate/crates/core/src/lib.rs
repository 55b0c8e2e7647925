//! Thompson sampling with an adaptive, variance-derived exploration bonus
//! (TSEB) for tabular MDPs.
//!
//! The crate is split along the pieces of the method:
//!
//! - [`mdp`]: tabular MDPs and exact planners, including the bonus-mixed
//!   Bellman operator.
//! - [`posterior`]: Dirichlet / Normal beliefs and the Thompson draw.
//! - [`bonus`]: visit counts, empirical means, the f-function and the bonus
//!   table.
//! - [`agent`]: the episodic control loop.
//! - [`envs`]: the chain and queuing benchmark domains.
//! - [`metrics`]: per-episode traces, regret and the convergence / PAC bounds.

pub mod agent;
pub mod bonus;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod metrics;
pub mod posterior;
pub mod rng;

pub use agent::{
    run_episode, run_experiment, run_experiment_with, AgentConfig, AgentState, EpisodeRecord,
    PosteriorCadence, Transition,
};
pub use bonus::{
    f_global, f_state, initial_f0, k_r, BonusMode, BonusTable, CountTable, RunningMeans,
};
pub use envs::{AnyEnvironment, ChainWorld, EnvKind, Environment, QueuingWorld, Step};
pub use error::{Error, Result};
pub use mdp::{
    bellman_backup, finite_horizon_plan, finite_horizon_values, greedy_action, mixed_greedy_action,
    policy_value, value_iteration, BonusWeights, Plan, PlannerConfig, Policy, TabularMdp,
    ValueFunction,
};
pub use metrics::{
    episode_regret, f_bound, pac_sample_bound, tau_bound, EpisodeMeasurement, MetricsTrace,
    PacQuery, RegretOracle, RunSummary, TraceRow,
};
pub use posterior::{PosteriorState, PriorConfig, SampledModel};
