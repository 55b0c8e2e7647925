//! Tabular MDPs and exact dynamic-programming planners.
//!
//! Planning runs on a reward that mixes the model reward with an exploration
//! bonus: `lambda * R(s, a) + (1 - lambda) * rho(s, a)`. With `lambda = 1`
//! every planner here reduces to its textbook form.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_discount, ensure_finite, Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// A finite MDP with per-(s, a) mean rewards.
///
/// Transitions are stored flat, indexed `(s * n_actions + a) * n_states + s_next`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    reward_range: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        reward_range: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension(format!(
                "need at least one state and action, got {n_states}x{n_actions}"
            )));
        }
        let pairs = n_states * n_actions;
        if transition.len() != pairs * n_states {
            return Err(Error::Dimension(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                pairs * n_states
            )));
        }
        if reward.len() != pairs {
            return Err(Error::Dimension(format!(
                "reward table has {} entries, expected {pairs}",
                reward.len()
            )));
        }
        ensure_finite("transition", &transition)?;
        ensure_finite("reward", &reward)?;
        ensure_discount(discount)?;
        for (pair, row) in transition.chunks_exact(n_states).enumerate() {
            if let Some(p) = row.iter().find(|&&p| p < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "negative transition probability {p} in row ({}, {})",
                    pair / n_actions,
                    pair % n_actions
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "transition row ({}, {}) sums to {total}",
                    pair / n_actions,
                    pair % n_actions
                )));
            }
        }
        let span = table_span(&reward);
        if !reward_range.is_finite() || reward_range < span {
            return Err(Error::InvalidInput(format!(
                "reward_range {reward_range} is below the reward table span {span}"
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            reward_range,
        })
    }

    /// Builds an MDP whose `reward_range` is exactly the span of its reward table.
    pub fn with_table_range(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let span = if reward.iter().all(|r| r.is_finite()) {
            table_span(&reward)
        } else {
            0.0
        };
        Self::new(n_states, n_actions, transition, reward, discount, span)
    }

    /// Random MDP with Dirichlet(1) rows and rewards uniform on `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n_states: usize,
        n_actions: usize,
        discount: f64,
    ) -> Result<Self> {
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let draws: Vec<f64> = (0..n_states)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = draws.iter().sum();
            transition.extend(draws.iter().map(|x| x / total));
        }
        let reward = (0..n_states * n_actions)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        Self::new(n_states, n_actions, transition, reward, discount, 2.0)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward_range(&self) -> f64 {
        self.reward_range
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// Next-state distribution for `(s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

fn table_span(xs: &[f64]) -> f64 {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if xs.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// State values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n_states: usize) -> Self {
        Self(vec![0.0; n_states])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sup-norm distance.
    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Deterministic stationary policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some((s, a)) = actions.iter().enumerate().find(|(_, &a)| a >= n_actions) {
            return Err(Error::Dimension(format!(
                "policy picks action {a} in state {s}, but only {n_actions} actions exist"
            )));
        }
        Ok(Self(actions))
    }

    /// The same action everywhere.
    pub fn constant(n_states: usize, action: usize) -> Self {
        Self(vec![action; n_states])
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The reward mix used by the planner: `lambda * R + (1 - lambda) * rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonusWeights {
    lambda: f64,
    rho: Vec<f64>,
}

impl BonusWeights {
    pub fn new(lambda: f64, rho: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "lambda must lie in [0, 1], got {lambda}"
            )));
        }
        ensure_finite("rho", &rho)?;
        if let Some(i) = rho.iter().position(|&r| r < 0.0) {
            return Err(Error::InvalidInput(format!("rho[{i}] is negative")));
        }
        Ok(Self { lambda, rho })
    }

    /// `lambda = 1` with a zero bonus: plain reward maximisation.
    pub fn reward_only(n_pairs: usize) -> Self {
        Self {
            lambda: 1.0,
            rho: vec![0.0; n_pairs],
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    fn effective_reward(&self, mdp: &TabularMdp, s: usize, a: usize) -> f64 {
        let pair = s * mdp.n_actions + a;
        self.lambda * mdp.reward[pair] + (1.0 - self.lambda) * self.rho[pair]
    }
}

/// Action value under the bonus-mixed reward.
pub fn q_value(mdp: &TabularMdp, weights: &BonusWeights, v: &[f64], s: usize, a: usize) -> f64 {
    weights.effective_reward(mdp, s, a) + mdp.discount * mdp.expected_next(s, a, v)
}

/// Best action and its value in state `s`; ties go to the lowest index.
pub fn greedy_action(
    mdp: &TabularMdp,
    weights: &BonusWeights,
    v: &[f64],
    s: usize,
) -> (usize, f64) {
    mixed_greedy_action(mdp, weights.lambda, &weights.rho, v, s)
}

/// [`greedy_action`] with the mix given as a raw `lambda` and bonus slice, for
/// callers whose bonus table changes between decisions. Inputs are not
/// validated.
pub fn mixed_greedy_action(
    mdp: &TabularMdp,
    lambda: f64,
    rho: &[f64],
    v: &[f64],
    s: usize,
) -> (usize, f64) {
    let q = |a: usize| {
        let pair = s * mdp.n_actions + a;
        lambda * mdp.reward[pair]
            + (1.0 - lambda) * rho[pair]
            + mdp.discount * mdp.expected_next(s, a, v)
    };
    let mut best = (0, q(0));
    for a in 1..mdp.n_actions {
        let value = q(a);
        if value > best.1 {
            best = (a, value);
        }
    }
    best
}

fn check_shapes(mdp: &TabularMdp, weights: &BonusWeights, v: &ValueFunction) -> Result<()> {
    if v.len() != mdp.n_states {
        return Err(Error::Dimension(format!(
            "value function has {} entries for {} states",
            v.len(),
            mdp.n_states
        )));
    }
    if weights.rho.len() != mdp.n_states * mdp.n_actions {
        return Err(Error::Dimension(format!(
            "bonus table has {} entries for {} state-action pairs",
            weights.rho.len(),
            mdp.n_states * mdp.n_actions
        )));
    }
    if !weights.lambda.is_finite() {
        return Err(Error::InvalidInput("lambda is not finite".into()));
    }
    ensure_finite("rho", &weights.rho)?;
    ensure_finite("v", &v.0)
}

fn backup_unchecked(mdp: &TabularMdp, weights: &BonusWeights, v: &[f64], out: &mut [f64]) {
    for (s, slot) in out.iter_mut().enumerate() {
        *slot = greedy_action(mdp, weights, v, s).1;
    }
}

/// One application of the bonus-mixed Bellman optimality operator.
pub fn bellman_backup(
    mdp: &TabularMdp,
    weights: &BonusWeights,
    v: &ValueFunction,
) -> Result<ValueFunction> {
    check_shapes(mdp, weights, v)?;
    let mut out = vec![0.0; mdp.n_states];
    backup_unchecked(mdp, weights, &v.0, &mut out);
    Ok(ValueFunction(out))
}

/// `sup_s |(T v)(s) - v(s)|`.
pub fn bellman_residual(
    mdp: &TabularMdp,
    weights: &BonusWeights,
    v: &ValueFunction,
) -> Result<f64> {
    Ok(bellman_backup(mdp, weights, v)?.sup_distance(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

/// Output of [`value_iteration`].
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub values: ValueFunction,
    pub policy: Policy,
    /// False when `max_iter` sweeps ran out before the residual reached `tol`.
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
}

/// Value iteration from `V = 0` until the sweep-to-sweep change is at most `tol`.
pub fn value_iteration(
    mdp: &TabularMdp,
    weights: &BonusWeights,
    config: PlannerConfig,
) -> Result<Plan> {
    if config.tol.is_nan() || config.tol <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {}",
            config.tol
        )));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let mut v = vec![0.0; mdp.n_states];
    check_shapes(mdp, weights, &ValueFunction(v.clone()))?;
    let mut next = vec![0.0; mdp.n_states];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iter {
        backup_unchecked(mdp, weights, &v, &mut next);
        residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if residual <= config.tol {
            break;
        }
    }
    let policy = Policy(
        (0..mdp.n_states)
            .map(|s| greedy_action(mdp, weights, &v, s).0)
            .collect(),
    );
    Ok(Plan {
        values: ValueFunction(v),
        policy,
        converged: residual <= config.tol,
        iterations,
        residual,
    })
}

/// Exact discounted value of a stationary policy, via a dense linear solve.
pub fn policy_value(mdp: &TabularMdp, policy: &Policy) -> Result<ValueFunction> {
    let n = mdp.n_states;
    if policy.len() != n {
        return Err(Error::Dimension(format!(
            "policy covers {} states, MDP has {n}",
            policy.len()
        )));
    }
    if let Some(&a) = policy.0.iter().find(|&&a| a >= mdp.n_actions) {
        return Err(Error::Dimension(format!("policy action {a} out of range")));
    }
    let system = DMatrix::from_fn(n, n, |s, t| {
        let p = mdp.row(s, policy.action(s))[t];
        let diag = if s == t { 1.0 } else { 0.0 };
        diag - mdp.discount * p
    });
    let rhs = DVector::from_fn(n, |s, _| mdp.reward(s, policy.action(s)));
    let solution = system
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("policy evaluation system is singular".into()))?;
    let residual = (&system * &solution - &rhs).amax();
    if residual.is_nan() || residual > 1e-10 {
        return Err(Error::Numerical(format!(
            "policy evaluation residual {residual} exceeds 1e-10"
        )));
    }
    Ok(ValueFunction(solution.iter().copied().collect()))
}

/// Optimal undiscounted finite-horizon values and the nonstationary policy
/// attaining them.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonPlan {
    /// `values[k]` is the optimal expected return with `k` steps to go.
    pub values: Vec<ValueFunction>,
    /// `actions[k]` is the optimal decision rule with `k + 1` steps to go.
    pub actions: Vec<Policy>,
}

impl FiniteHorizonPlan {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// Action to take at time `t` (0-based) within the horizon.
    pub fn action_at(&self, t: usize, s: usize) -> usize {
        self.actions[self.horizon() - 1 - t].action(s)
    }
}

/// Backward induction over `horizon` steps on the undiscounted mean rewards.
pub fn finite_horizon_plan(mdp: &TabularMdp, horizon: usize) -> Result<FiniteHorizonPlan> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let n = mdp.n_states;
    let mut values = vec![ValueFunction::zeros(n)];
    let mut actions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let prev = values.last().expect("seeded with zero-step values");
        let mut next = Vec::with_capacity(n);
        let mut rule = Vec::with_capacity(n);
        for s in 0..n {
            let mut best = (0, f64::NEG_INFINITY);
            for a in 0..mdp.n_actions {
                let q = mdp.reward(s, a) + mdp.expected_next(s, a, &prev.0);
                if q > best.1 {
                    best = (a, q);
                }
            }
            rule.push(best.0);
            next.push(best.1);
        }
        values.push(ValueFunction(next));
        actions.push(Policy(rule));
    }
    Ok(FiniteHorizonPlan { values, actions })
}

/// Optimal expected undiscounted `horizon`-step return from each state.
pub fn finite_horizon_values(mdp: &TabularMdp, horizon: usize) -> Result<ValueFunction> {
    let mut plan = finite_horizon_plan(mdp, horizon)?;
    Ok(plan.values.pop().expect("horizon >= 1"))
}
