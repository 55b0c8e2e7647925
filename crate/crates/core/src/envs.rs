//! Simulated benchmark domains with exact model exports.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::rng::SimRng;

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next_state: usize,
    pub reward: f64,
}

pub trait Environment {
    fn name(&self) -> &'static str;

    fn n_states(&self) -> usize;

    fn n_actions(&self) -> usize;

    fn state(&self) -> usize;

    /// Returns to the start state.
    fn reset(&mut self) -> usize;

    fn step(&mut self, action: usize) -> Result<Step>;

    /// Exact transition tensor and mean rewards.
    fn true_mdp(&self) -> &TabularMdp;

    fn start_state(&self) -> usize {
        0
    }
}

fn check_action(env: &dyn Environment, action: usize) -> Result<()> {
    if action >= env.n_actions() {
        return Err(Error::Dimension(format!(
            "{} has {} actions, got action {action}",
            env.name(),
            env.n_actions()
        )));
    }
    Ok(())
}

/// Five-state chain with actions `a` (index 0, move right) and `b` (index 1,
/// return to the first state). The executed move is flipped with probability
/// 0.2.
///
/// Rewards: any action taken in the first state pays a `N(0.2, 0.5)` draw
/// (variance 0.5). Elsewhere, staying in the last state by moving right pays 1,
/// returning to the first state pays 0.2, and every other move pays 0.
#[derive(Debug, Clone)]
pub struct ChainWorld {
    state: usize,
    rng: SimRng,
    noise: Normal<f64>,
    mdp: TabularMdp,
}

impl ChainWorld {
    pub const N_STATES: usize = 5;
    pub const N_ACTIONS: usize = 2;
    pub const ACTION_A: usize = 0;
    pub const ACTION_B: usize = 1;
    pub const SLIP: f64 = 0.2;
    pub const DISCOUNT: f64 = 0.8;
    pub const RETURN_REWARD: f64 = 0.2;
    pub const END_REWARD: f64 = 1.0;
    pub const FIRST_STATE_NOISE_VARIANCE: f64 = 0.5;
    /// Normalised reward range used for the f-function.
    pub const REWARD_RANGE: f64 = 2.0;

    pub fn new(rng: SimRng) -> Self {
        Self {
            state: 0,
            rng,
            noise: Normal::new(Self::RETURN_REWARD, Self::FIRST_STATE_NOISE_VARIANCE.sqrt())
                .expect("valid normal"),
            mdp: Self::model(),
        }
    }

    fn forward(s: usize) -> usize {
        (s + 1).min(Self::N_STATES - 1)
    }

    fn forward_reward(s: usize) -> f64 {
        if s == Self::N_STATES - 1 {
            Self::END_REWARD
        } else {
            0.0
        }
    }

    fn model() -> TabularMdp {
        let (n, m) = (Self::N_STATES, Self::N_ACTIONS);
        let mut transition = vec![0.0; n * m * n];
        let mut reward = vec![0.0; n * m];
        for s in 0..n {
            for a in 0..m {
                let p_forward = if a == Self::ACTION_A {
                    1.0 - Self::SLIP
                } else {
                    Self::SLIP
                };
                let row = &mut transition[(s * m + a) * n..(s * m + a + 1) * n];
                row[Self::forward(s)] += p_forward;
                row[0] += 1.0 - p_forward;
                reward[s * m + a] = if s == 0 {
                    Self::RETURN_REWARD
                } else {
                    p_forward * Self::forward_reward(s) + (1.0 - p_forward) * Self::RETURN_REWARD
                };
            }
        }
        TabularMdp::new(n, m, transition, reward, Self::DISCOUNT, Self::REWARD_RANGE)
            .expect("chain model is well formed")
    }
}

impl Environment for ChainWorld {
    fn name(&self) -> &'static str {
        "chain"
    }

    fn n_states(&self) -> usize {
        Self::N_STATES
    }

    fn n_actions(&self) -> usize {
        Self::N_ACTIONS
    }

    fn state(&self) -> usize {
        self.state
    }

    fn reset(&mut self) -> usize {
        self.state = 0;
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        check_action(self, action)?;
        let slipped = self.rng.random::<f64>() < Self::SLIP;
        let moves_forward = (action == Self::ACTION_A) != slipped;
        let s = self.state;
        let next_state = if moves_forward { Self::forward(s) } else { 0 };
        let reward = if s == 0 {
            self.noise.sample(&mut self.rng)
        } else if moves_forward {
            Self::forward_reward(s)
        } else {
            Self::RETURN_REWARD
        };
        let step = Step { next_state, reward };
        self.state = step.next_state;
        Ok(step)
    }

    fn true_mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

/// Single-server queue with capacity 50. Action 0 is SLOW service, action 1
/// FAST service.
///
/// Each step: the chosen service completes one packet with its probability if
/// the queue is nonempty (+1 reward), then a packet arrives with
/// `arrival_prob`. The action cost is charged at the acting step and the
/// holding cost on the resulting queue length.
#[derive(Debug, Clone)]
pub struct QueuingWorld {
    state: usize,
    arrival_prob: f64,
    rng: SimRng,
    mdp: TabularMdp,
}

impl QueuingWorld {
    pub const CAPACITY: usize = 50;
    pub const N_STATES: usize = Self::CAPACITY + 1;
    pub const N_ACTIONS: usize = 2;
    pub const SLOW: usize = 0;
    pub const FAST: usize = 1;
    pub const SERVICE_PROB: [f64; 2] = [0.3, 0.8];
    pub const ACTION_COST: [f64; 2] = [0.0, -0.25];
    pub const HOLDING_COST: f64 = -0.1;
    pub const SERVICE_REWARD: f64 = 1.0;
    pub const DISCOUNT: f64 = 0.8;
    pub const DEFAULT_ARRIVAL_PROB: f64 = 0.5;
    /// Span between the best (+1) and worst (-5.25) single-step rewards.
    pub const REWARD_RANGE: f64 = 6.25;

    pub fn new(arrival_prob: f64, rng: SimRng) -> Result<Self> {
        if !(0.0..=1.0).contains(&arrival_prob) {
            return Err(Error::InvalidInput(format!(
                "arrival_prob must lie in [0, 1], got {arrival_prob}"
            )));
        }
        Ok(Self {
            state: 0,
            arrival_prob,
            rng,
            mdp: Self::model(arrival_prob),
        })
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    fn outcome(q: usize, action: usize, served: bool, arrived: bool) -> (usize, f64) {
        let after_service = if served { q - 1 } else { q };
        let next = (after_service + usize::from(arrived)).min(Self::CAPACITY);
        let reward = Self::ACTION_COST[action]
            + if served { Self::SERVICE_REWARD } else { 0.0 }
            + Self::HOLDING_COST * next as f64;
        (next, reward)
    }

    fn model(arrival_prob: f64) -> TabularMdp {
        let (n, m) = (Self::N_STATES, Self::N_ACTIONS);
        let mut transition = vec![0.0; n * m * n];
        let mut reward = vec![0.0; n * m];
        for q in 0..n {
            for a in 0..m {
                let p_serve = if q > 0 { Self::SERVICE_PROB[a] } else { 0.0 };
                let pair = q * m + a;
                for (served, p_s) in [(true, p_serve), (false, 1.0 - p_serve)] {
                    for (arrived, p_a) in [(true, arrival_prob), (false, 1.0 - arrival_prob)] {
                        let p = p_s * p_a;
                        if p == 0.0 {
                            continue;
                        }
                        let (next, r) = Self::outcome(q, a, served, arrived);
                        transition[pair * n + next] += p;
                        reward[pair] += p * r;
                    }
                }
            }
        }
        TabularMdp::new(n, m, transition, reward, Self::DISCOUNT, Self::REWARD_RANGE)
            .expect("queue model is well formed")
    }
}

impl Environment for QueuingWorld {
    fn name(&self) -> &'static str {
        "queuing"
    }

    fn n_states(&self) -> usize {
        Self::N_STATES
    }

    fn n_actions(&self) -> usize {
        Self::N_ACTIONS
    }

    fn state(&self) -> usize {
        self.state
    }

    fn reset(&mut self) -> usize {
        self.state = 0;
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        check_action(self, action)?;
        let q = self.state;
        let served = q > 0 && self.rng.random::<f64>() < Self::SERVICE_PROB[action];
        let arrived = self.rng.random::<f64>() < self.arrival_prob;
        let (next_state, reward) = Self::outcome(q, action, served, arrived);
        self.state = next_state;
        Ok(Step { next_state, reward })
    }

    fn true_mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Chain,
    Queuing,
}

impl EnvKind {
    pub fn build(self, arrival_prob: f64, rng: SimRng) -> Result<AnyEnvironment> {
        Ok(match self {
            EnvKind::Chain => AnyEnvironment::Chain(ChainWorld::new(rng)),
            EnvKind::Queuing => AnyEnvironment::Queuing(QueuingWorld::new(arrival_prob, rng)?),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Chain => "chain",
            EnvKind::Queuing => "queuing",
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(EnvKind::Chain),
            "queuing" | "queueing" => Ok(EnvKind::Queuing),
            other => Err(Error::InvalidInput(format!(
                "unknown environment {other:?}"
            ))),
        }
    }
}

/// Either benchmark domain, selected at runtime.
#[derive(Debug, Clone)]
pub enum AnyEnvironment {
    Chain(ChainWorld),
    Queuing(QueuingWorld),
}

impl AnyEnvironment {
    fn inner(&self) -> &dyn Environment {
        match self {
            AnyEnvironment::Chain(e) => e,
            AnyEnvironment::Queuing(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnvironment::Chain(e) => e,
            AnyEnvironment::Queuing(e) => e,
        }
    }
}

impl Environment for AnyEnvironment {
    fn name(&self) -> &'static str {
        self.inner().name()
    }

    fn n_states(&self) -> usize {
        self.inner().n_states()
    }

    fn n_actions(&self) -> usize {
        self.inner().n_actions()
    }

    fn state(&self) -> usize {
        self.inner().state()
    }

    fn reset(&mut self) -> usize {
        self.inner_mut().reset()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        self.inner_mut().step(action)
    }

    fn true_mdp(&self) -> &TabularMdp {
        self.inner().true_mdp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{policy_value, value_iteration, BonusWeights, PlannerConfig, Policy};
    use crate::rng::stream;

    /// Upper tail of the chi-square distribution via the Wilson-Hilferty
    /// normal approximation; accurate enough for a p > 0.001 screen.
    fn chi_square_p_value(stat: f64, dof: usize) -> f64 {
        let k = dof as f64;
        let z = ((stat / k).powf(1.0 / 3.0) - (1.0 - 2.0 / (9.0 * k))) / (2.0 / (9.0 * k)).sqrt();
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    }

    fn erfc(x: f64) -> f64 {
        // Numerical Recipes erfcc, fractional error < 1.2e-7.
        let z = x.abs();
        let t = 1.0 / (1.0 + 0.5 * z);
        let r = t
            * (-z * z - 1.26551223
                + t * (1.00002368
                    + t * (0.37409196
                        + t * (0.09678418
                            + t * (-0.18628806
                                + t * (0.27886807
                                    + t * (-1.13520398
                                        + t * (1.48851587
                                            + t * (-0.82215223 + t * 0.17087277)))))))))
                .exp();
        if x >= 0.0 {
            r
        } else {
            2.0 - r
        }
    }

    fn chi_square(env: &mut dyn Environment, s: usize, a: usize, draws: usize) -> f64 {
        let n = env.n_states();
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            force_state(env, s);
            counts[env.step(a).unwrap().next_state] += 1;
        }
        let row = env.true_mdp().row(s, a).to_vec();
        let mut stat = 0.0;
        let mut dof = 0usize;
        for (c, p) in counts.iter().zip(&row) {
            if *p > 0.0 {
                let e = p * draws as f64;
                stat += (*c as f64 - e).powi(2) / e;
                dof += 1;
            } else {
                assert_eq!(*c, 0, "visited an impossible state");
            }
        }
        if dof <= 1 {
            return 1.0;
        }
        chi_square_p_value(stat, dof - 1)
    }

    fn force_state(env: &mut dyn Environment, s: usize) {
        env.reset();
        // Drive the environment to `s` with rejection over short walks.
        let mut guard = 0;
        while env.state() != s {
            let a = if env.name() == "chain" {
                ChainWorld::ACTION_A
            } else {
                QueuingWorld::SLOW
            };
            env.step(a).unwrap();
            if env.state() > s {
                env.reset();
            }
            guard += 1;
            assert!(guard < 1_000_000);
        }
    }

    #[test]
    fn chain_rows_follow_the_slip() {
        let env = ChainWorld::new(stream(0, 1));
        let mdp = env.true_mdp();
        let close =
            |got: &[f64], want: [f64; 5]| got.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-12);
        assert!(close(
            mdp.row(0, ChainWorld::ACTION_A),
            [0.2, 0.8, 0.0, 0.0, 0.0]
        ));
        assert!(close(
            mdp.row(0, ChainWorld::ACTION_B),
            [0.8, 0.2, 0.0, 0.0, 0.0]
        ));
        assert!(close(
            mdp.row(4, ChainWorld::ACTION_A),
            [0.2, 0.0, 0.0, 0.0, 0.8]
        ));
        assert_eq!(mdp.reward(0, ChainWorld::ACTION_A), 0.2);
        assert!((mdp.reward(4, ChainWorld::ACTION_A) - 0.84).abs() < 1e-12);
        assert!((mdp.reward(2, ChainWorld::ACTION_B) - 0.16).abs() < 1e-12);
        assert_eq!(mdp.discount(), 0.8);
    }

    #[test]
    fn chain_optimal_policy_is_all_a() {
        let env = ChainWorld::new(stream(0, 1));
        let plan = value_iteration(
            env.true_mdp(),
            &BonusWeights::reward_only(10),
            PlannerConfig::default(),
        )
        .unwrap();
        assert_eq!(plan.policy, Policy::constant(5, ChainWorld::ACTION_A));
    }

    #[test]
    fn chain_first_state_frequencies() {
        let mut env = ChainWorld::new(stream(3, 1));
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            env.reset();
            counts[env.step(ChainWorld::ACTION_A).unwrap().next_state] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
        for (f, p) in freq.iter().zip([0.2, 0.8, 0.0, 0.0, 0.0]) {
            assert!((f - p).abs() < 0.01, "{freq:?}");
        }
    }

    #[test]
    fn chain_first_state_reward_is_noisy_with_mean_point_two() {
        let mut env = ChainWorld::new(stream(4, 1));
        let (mut sum, mut sq, mut n) = (0.0, 0.0, 0usize);
        for _ in 0..200_000 {
            env.reset();
            let step = env.step(ChainWorld::ACTION_B).unwrap();
            if step.next_state == 0 {
                sum += step.reward;
                sq += step.reward * step.reward;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((mean - 0.2).abs() < 0.01);
        assert!((var - 0.5).abs() < 0.02);
    }

    #[test]
    fn step_distributions_match_models() {
        let mut chain = ChainWorld::new(stream(5, 1));
        for (s, a) in [(0, 0), (2, 1), (4, 0), (4, 1)] {
            let p = chi_square(&mut chain, s, a, 100_000);
            assert!(p > 0.001, "chain ({s},{a}) p={p}");
        }
        let mut queue = QueuingWorld::new(0.5, stream(6, 1)).unwrap();
        for (s, a) in [(0, 1), (1, 0), (3, 1), (5, 0)] {
            let p = chi_square(&mut queue, s, a, 100_000);
            assert!(p > 0.001, "queue ({s},{a}) p={p}");
        }
    }

    #[test]
    fn queue_reward_examples() {
        assert_eq!(
            QueuingWorld::outcome(0, QueuingWorld::FAST, false, false),
            (0, -0.25)
        );
        let (next, r) = QueuingWorld::outcome(3, QueuingWorld::SLOW, true, false);
        assert_eq!(next, 2);
        assert!((r - 0.8).abs() < 1e-12);
        let mut env = QueuingWorld::new(0.0, stream(7, 1)).unwrap();
        let step = env.step(QueuingWorld::FAST).unwrap();
        assert_eq!(
            step,
            Step {
                next_state: 0,
                reward: -0.25
            }
        );
    }

    #[test]
    fn queue_fast_service_frequency() {
        let mut env = QueuingWorld::new(0.5, stream(8, 1)).unwrap();
        let mut served = 0usize;
        let mut attempts = 0usize;
        while attempts < 100_000 {
            let q = env.state();
            if q == 0 {
                env.step(QueuingWorld::SLOW).unwrap();
                continue;
            }
            let before = q;
            let step = env.step(QueuingWorld::FAST).unwrap();
            attempts += 1;
            // A served packet shows up as the +1 service reward.
            let served_now = step.reward
                - QueuingWorld::ACTION_COST[1]
                - QueuingWorld::HOLDING_COST * step.next_state as f64
                > 0.5;
            served += usize::from(served_now);
            assert!(step.next_state + 1 >= before);
        }
        let freq = served as f64 / attempts as f64;
        assert!((freq - 0.8).abs() < 0.01, "{freq}");
    }

    #[test]
    fn queue_stays_in_bounds() {
        let mut env = QueuingWorld::new(0.95, stream(9, 1)).unwrap();
        for t in 0..20_000 {
            let step = env.step(t % 2).unwrap();
            assert!(step.next_state <= QueuingWorld::CAPACITY);
        }
        assert!(QueuingWorld::new(1.5, stream(0, 1)).is_err());
        assert!(QueuingWorld::new(-0.1, stream(0, 1)).is_err());
    }

    #[test]
    fn queue_rewards_fit_declared_range() {
        let env = QueuingWorld::new(0.5, stream(0, 1)).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for q in 0..=QueuingWorld::CAPACITY {
            for a in 0..2 {
                for served in [true, false] {
                    for arrived in [true, false] {
                        if served && q == 0 {
                            continue;
                        }
                        let r = QueuingWorld::outcome(q, a, served, arrived).1;
                        lo = lo.min(r);
                        hi = hi.max(r);
                    }
                }
            }
        }
        assert!((hi - lo - QueuingWorld::REWARD_RANGE).abs() < 1e-12);
        assert!(env.true_mdp().reward_range() >= hi - lo - 1e-12);
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        for kind in [EnvKind::Chain, EnvKind::Queuing] {
            let run = || {
                let mut env = kind.build(0.5, stream(77, 1)).unwrap();
                (0..500)
                    .map(|t| env.step((t / 3) % 2).unwrap())
                    .collect::<Vec<_>>()
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn invalid_actions_fail() {
        let mut env = ChainWorld::new(stream(0, 1));
        assert!(matches!(env.step(2), Err(Error::Dimension(_))));
    }

    #[test]
    fn env_names_parse() {
        assert_eq!("chain".parse::<EnvKind>().unwrap(), EnvKind::Chain);
        assert_eq!("queuing".parse::<EnvKind>().unwrap(), EnvKind::Queuing);
        assert!("gridworld".parse::<EnvKind>().is_err());
    }

    /// Discounted Monte-Carlo return of a fixed policy against the exact
    /// linear-solve value.
    fn check_policy_value(env: &mut dyn Environment, policy: &Policy, episodes: usize, len: usize) {
        let exact = policy_value(env.true_mdp(), policy).unwrap();
        let gamma = env.true_mdp().discount();
        let start = env.start_state();
        let mut returns = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            env.reset();
            let (mut g, mut disc) = (0.0, 1.0);
            for _ in 0..len {
                let step = env.step(policy.action(env.state())).unwrap();
                g += disc * step.reward;
                disc *= gamma;
            }
            returns.push(g);
        }
        let m = returns.iter().sum::<f64>() / episodes as f64;
        let var = returns.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (episodes - 1) as f64;
        let se = (var / episodes as f64).sqrt();
        // Truncation after `len` steps leaves at most gamma^len * R / (1 - gamma).
        let truncation = gamma.powi(len as i32) * 10.0 / (1.0 - gamma);
        assert!(
            (m - exact[start]).abs() <= 3.0 * se + truncation,
            "{} mc {m} exact {} se {se}",
            env.name(),
            exact[start]
        );
    }

    #[test]
    fn models_agree_with_simulation() {
        // 10^6 simulated steps per environment.
        let mut chain = ChainWorld::new(stream(12, 1));
        check_policy_value(
            &mut chain,
            &Policy::constant(5, ChainWorld::ACTION_A),
            20_000,
            50,
        );
        let mut queue = QueuingWorld::new(0.5, stream(13, 1)).unwrap();
        check_policy_value(
            &mut queue,
            &Policy::constant(51, QueuingWorld::FAST),
            20_000,
            50,
        );
    }
}
