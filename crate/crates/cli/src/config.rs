//! Experiment configuration: a TOML file of optional fields, command-line
//! overrides on top, and environment-dependent defaults for the rest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tseb::{
    AgentConfig, BonusMode, EnvKind, PacQuery, PlannerConfig, PosteriorCadence, PriorConfig,
    QueuingWorld,
};

use crate::error::CliError;

/// Chain rewards live in the normalised `[-1, 1]` range.
pub const CHAIN_REWARD_BOUNDS: (f64, f64) = (-1.0, 1.0);
/// Queuing rewards run from the worst holding plus service cost to one served packet.
pub const QUEUING_REWARD_BOUNDS: (f64, f64) = (-6.35, 1.0);
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RUNS: usize = 30;

/// Prior hyperparameters as they appear in a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPrior {
    pub alpha0: Option<f64>,
    pub reward_mean: Option<f64>,
    pub reward_precision: Option<f64>,
    pub obs_noise_variance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPlanner {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPac {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
}

/// Config file contents before defaults are filled in.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub env: Option<String>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub episodes: Option<usize>,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub bonus_mode: Option<String>,
    pub cadence: Option<String>,
    pub arrival_prob: Option<f64>,
    pub prior: Option<RawPrior>,
    pub reward_bounds: Option<[f64; 2]>,
    pub delta_r: Option<f64>,
    pub bound_c: Option<f64>,
    pub f0_probes: Option<usize>,
    pub planner: Option<RawPlanner>,
    pub pac: Option<RawPac>,
    pub output_dir: Option<PathBuf>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config {
            field: field_of_toml_error(&e),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: RawConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            env,
            lambda,
            lambdas,
            episodes,
            horizon,
            gamma,
            seed,
            runs,
            bonus_mode,
            cadence,
            arrival_prob,
            reward_bounds,
            delta_r,
            bound_c,
            f0_probes,
            output_dir
        );
        if let Some(p) = other.prior {
            let mine = self.prior.get_or_insert_with(RawPrior::default);
            mine.alpha0 = p.alpha0.or(mine.alpha0);
            mine.reward_mean = p.reward_mean.or(mine.reward_mean);
            mine.reward_precision = p.reward_precision.or(mine.reward_precision);
            mine.obs_noise_variance = p.obs_noise_variance.or(mine.obs_noise_variance);
        }
        if let Some(p) = other.planner {
            let mine = self.planner.get_or_insert_with(RawPlanner::default);
            mine.tol = p.tol.or(mine.tol);
            mine.max_iter = p.max_iter.or(mine.max_iter);
        }
        if let Some(p) = other.pac {
            let mine = self.pac.get_or_insert_with(RawPac::default);
            mine.epsilon = p.epsilon.or(mine.epsilon);
            mine.delta = p.delta.or(mine.delta);
        }
        self
    }

    /// Fills defaults and validates every field.
    pub fn resolve(self) -> Result<ExperimentConfig, CliError> {
        let env: EnvKind = match &self.env {
            Some(name) => name
                .parse()
                .map_err(|_| bad("env", format!("unknown environment {name:?}")))?,
            None => EnvKind::Chain,
        };
        let (episodes, horizon, bounds, delta_r) = match env {
            EnvKind::Chain => (1000, 100, CHAIN_REWARD_BOUNDS, 2.0),
            EnvKind::Queuing => (500, 200, QUEUING_REWARD_BOUNDS, QueuingWorld::REWARD_RANGE),
        };
        let base_prior = PriorConfig::default();
        let raw_prior = self.prior.unwrap_or_default();
        let raw_planner = self.planner.unwrap_or_default();
        let raw_pac = self.pac.unwrap_or_default();
        let lambda = self.lambda.unwrap_or(0.5);
        let bounds = self.reward_bounds.map_or(bounds, |[lo, hi]| (lo, hi));
        let config = ExperimentConfig {
            env,
            lambda,
            lambdas: self.lambdas.unwrap_or_else(default_grid),
            episodes: self.episodes.unwrap_or(episodes),
            horizon: self.horizon.unwrap_or(horizon),
            gamma: self.gamma.unwrap_or(0.8),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            runs: self.runs.unwrap_or(DEFAULT_RUNS),
            bonus_mode: parse_field("bonus_mode", self.bonus_mode)?,
            cadence: parse_field("cadence", self.cadence)?,
            arrival_prob: self
                .arrival_prob
                .unwrap_or(QueuingWorld::DEFAULT_ARRIVAL_PROB),
            prior: PriorConfig {
                alpha0: raw_prior.alpha0.unwrap_or(base_prior.alpha0),
                reward_mean: raw_prior.reward_mean.unwrap_or(base_prior.reward_mean),
                reward_precision: raw_prior
                    .reward_precision
                    .unwrap_or(base_prior.reward_precision),
                obs_noise_variance: raw_prior
                    .obs_noise_variance
                    .unwrap_or(base_prior.obs_noise_variance),
                reward_bounds: bounds,
            },
            delta_r: self.delta_r.unwrap_or(delta_r),
            bound_c: self.bound_c.unwrap_or(2.0),
            f0_probes: self.f0_probes.unwrap_or(1000),
            planner: PlannerConfig {
                tol: raw_planner.tol.unwrap_or(PlannerConfig::default().tol),
                max_iter: raw_planner
                    .max_iter
                    .unwrap_or(PlannerConfig::default().max_iter),
            },
            pac: PacQuery {
                epsilon: raw_pac.epsilon.unwrap_or(PacQuery::default().epsilon),
                delta: raw_pac.delta.unwrap_or(PacQuery::default().delta),
            },
            output_dir: self.output_dir.unwrap_or_else(|| PathBuf::from("results")),
        };
        config.validate()?;
        Ok(config)
    }
}

fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn bad(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_field<T>(field: &str, value: Option<String>) -> Result<T, CliError>
where
    T: std::str::FromStr + Default,
    T::Err: std::fmt::Display,
{
    match value {
        Some(v) => v.parse().map_err(|e: T::Err| bad(field, e.to_string())),
        None => Ok(T::default()),
    }
}

fn field_of_toml_error(e: &toml::de::Error) -> String {
    let msg = e.message();
    ["unknown field `", "missing field `", "duplicate key `"]
        .iter()
        .find_map(|prefix| {
            let rest = msg.split(prefix).nth(1)?;
            Some(rest.split('`').next()?.to_string())
        })
        .unwrap_or_else(|| "config".to_string())
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub seed: u64,
    pub runs: usize,
    pub bonus_mode: BonusMode,
    pub cadence: PosteriorCadence,
    pub arrival_prob: f64,
    pub prior: PriorConfig,
    pub delta_r: f64,
    pub bound_c: f64,
    pub f0_probes: usize,
    pub planner: PlannerConfig,
    pub pac: PacQuery,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.lambda) {
            return Err(bad(
                "lambda",
                format!("must lie in [0, 1], got {}", self.lambda),
            ));
        }
        if self.lambdas.is_empty() {
            return Err(bad("lambdas", "grid is empty"));
        }
        if let Some(l) = self.lambdas.iter().find(|&&l| !unit(l)) {
            return Err(bad(
                "lambdas",
                format!("every value must lie in [0, 1], got {l}"),
            ));
        }
        if self.horizon == 0 {
            return Err(bad("horizon", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad(
                "gamma",
                format!("must lie in (0, 1), got {}", self.gamma),
            ));
        }
        if self.runs == 0 {
            return Err(bad("runs", "must be at least 1"));
        }
        if !unit(self.arrival_prob) {
            return Err(bad(
                "arrival_prob",
                format!("must lie in [0, 1], got {}", self.arrival_prob),
            ));
        }
        let (lo, hi) = self.prior.reward_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(bad(
                "reward_bounds",
                format!("need lo < hi, got [{lo}, {hi}]"),
            ));
        }
        self.prior
            .validate()
            .map_err(|e| bad("prior", e.to_string()))?;
        if !(self.delta_r >= 0.0 && self.delta_r.is_finite()) {
            return Err(bad(
                "delta_r",
                format!("must be finite and nonnegative, got {}", self.delta_r),
            ));
        }
        if !(self.bound_c > 0.0 && self.bound_c.is_finite()) {
            return Err(bad(
                "bound_c",
                format!("must be positive, got {}", self.bound_c),
            ));
        }
        if self.f0_probes == 0 {
            return Err(bad("f0_probes", "must be at least 1"));
        }
        if self.planner.tol.is_nan() || self.planner.tol <= 0.0 || self.planner.max_iter == 0 {
            return Err(bad(
                "planner",
                "tol must be positive and max_iter at least 1",
            ));
        }
        self.pac.validate().map_err(|e| bad("pac", e.to_string()))?;
        self.agent_config(self.lambda)
            .validate()
            .map_err(|e| bad("config", e.to_string()))
    }

    pub fn agent_config(&self, lambda: f64) -> AgentConfig {
        AgentConfig {
            lambda,
            episodes: self.episodes,
            horizon: self.horizon,
            gamma: self.gamma,
            bonus_mode: self.bonus_mode,
            planner: self.planner,
            cadence: self.cadence,
            prior: self.prior,
            delta_r: self.delta_r,
            bound_c: self.bound_c,
            f0_probes: self.f0_probes,
            pac: self.pac,
        }
    }

    /// The same settings as a config file, every field spelled out.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            env: Some(self.env.to_string()),
            lambda: Some(self.lambda),
            lambdas: Some(self.lambdas.clone()),
            episodes: Some(self.episodes),
            horizon: Some(self.horizon),
            gamma: Some(self.gamma),
            seed: Some(self.seed),
            runs: Some(self.runs),
            bonus_mode: Some(self.bonus_mode.to_string()),
            cadence: Some(self.cadence.to_string()),
            arrival_prob: Some(self.arrival_prob),
            prior: Some(RawPrior {
                alpha0: Some(self.prior.alpha0),
                reward_mean: Some(self.prior.reward_mean),
                reward_precision: Some(self.prior.reward_precision),
                obs_noise_variance: Some(self.prior.obs_noise_variance),
            }),
            reward_bounds: Some([self.prior.reward_bounds.0, self.prior.reward_bounds.1]),
            delta_r: Some(self.delta_r),
            bound_c: Some(self.bound_c),
            f0_probes: Some(self.f0_probes),
            planner: Some(RawPlanner {
                tol: Some(self.planner.tol),
                max_iter: Some(self.planner.max_iter),
            }),
            pac: Some(RawPac {
                epsilon: Some(self.pac.epsilon),
                delta: Some(self.pac.delta),
            }),
            output_dir: Some(self.output_dir.clone()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serialises")
    }
}
