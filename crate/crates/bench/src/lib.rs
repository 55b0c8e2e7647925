//! Fixtures shared by the benchmarks.

use rand::Rng;
use tseb::rng::stream;
use tseb::{PosteriorState, PriorConfig, TabularMdp};

pub fn random_mdp(n_states: usize, n_actions: usize, seed: u64) -> TabularMdp {
    TabularMdp::random(&mut stream(seed, 0), n_states, n_actions, 0.8).expect("valid mdp")
}

/// A posterior fed `observations` transitions drawn from a random MDP.
pub fn warm_posterior(
    n_states: usize,
    n_actions: usize,
    observations: usize,
    seed: u64,
) -> PosteriorState {
    let mut post =
        PosteriorState::new(n_states, n_actions, PriorConfig::default()).expect("valid prior");
    let mdp = random_mdp(n_states, n_actions, seed);
    let mut rng = stream(seed, 9);
    for i in 0..observations {
        let s = i % n_states;
        let a = (i / n_states) % n_actions;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = n_states - 1;
        for (t, p) in mdp.row(s, a).iter().enumerate() {
            acc += p;
            if u < acc {
                next = t;
                break;
            }
        }
        post.observe(s, a, next, mdp.reward(s, a))
            .expect("in range");
    }
    post
}
