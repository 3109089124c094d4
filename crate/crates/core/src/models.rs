//! Bundled example models and random instance generators.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::format::{parse_pomdp_text_with_warnings, ModelSource};
use crate::model::PomdpModel;
use crate::rng::RngSeed;

pub const TIGER_TEXT: &str = include_str!("../data/tiger.pomdp");
pub const CHAIN_TEXT: &str = include_str!("../data/chain.pomdp");
pub const GRIDWORLD_TEXT: &str = include_str!("../data/gridworld.pomdp");

/// All bundled documents as `(name, text)`.
pub const BUNDLED: [(&str, &str); 3] = [
    ("tiger", TIGER_TEXT),
    ("chain", CHAIN_TEXT),
    ("gridworld", GRIDWORLD_TEXT),
];

fn bundled(name: &str, text: &str) -> PomdpModel {
    parse_pomdp_text_with_warnings(&ModelSource::new(text, format!("<bundled:{name}>")))
        .expect("bundled model parses")
        .model
}

/// Two doors, one tiger. Actions listen/open-left/open-right, observations
/// hear-left/hear-right.
pub fn tiger() -> PomdpModel {
    bundled("tiger", TIGER_TEXT)
}

/// One state, two actions, reward 1 per step.
pub fn chain() -> PomdpModel {
    bundled("chain", CHAIN_TEXT)
}

/// 3x3 slippery grid with a rewarding corner.
pub fn gridworld() -> PomdpModel {
    bundled("gridworld", GRIDWORLD_TEXT)
}

/// Single-state model with constant reward `c` for every action.
pub fn constant_reward(num_actions: usize, num_observations: usize, c: f64) -> PomdpModel {
    PomdpModel::new(
        1,
        num_actions,
        num_observations,
        vec![1.0; num_actions],
        vec![1.0 / num_observations as f64; num_actions * num_observations],
        vec![c; num_actions],
        vec![1.0],
    )
    .expect("valid constant model")
}

/// Point drawn uniformly from the probability simplex of dimension `n`.
pub fn simplex_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        v = vec![1.0 / n as f64; n];
    }
    v
}

/// Random dense model with simplex-uniform rows and rewards uniform in [-10, 10].
pub fn random_model(
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    seed: RngSeed,
) -> PomdpModel {
    let mut rng = seed.rng();
    let mut transition = Vec::with_capacity(num_actions * num_states * num_states);
    for _ in 0..num_actions * num_states {
        transition.extend(simplex_point(num_states, &mut rng));
    }
    let mut observation = Vec::with_capacity(num_actions * num_states * num_observations);
    for _ in 0..num_actions * num_states {
        observation.extend(simplex_point(num_observations, &mut rng));
    }
    let reward = (0..num_actions * num_states)
        .map(|_| rng.random_range(-10.0..10.0))
        .collect();
    let initial = simplex_point(num_states, &mut rng);
    PomdpModel::new(
        num_states,
        num_actions,
        num_observations,
        transition,
        observation,
        reward,
        initial,
    )
    .expect("random model is valid")
}

/// Random model whose transition, observation and start tables are all 0/1.
pub fn random_deterministic_model(
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
    seed: RngSeed,
) -> PomdpModel {
    let mut rng = seed.rng();
    let one_hot = |n: usize, rng: &mut crate::rng::SimRng| {
        let mut v = vec![0.0; n];
        v[rng.random_range(0..n)] = 1.0;
        v
    };
    let mut transition = Vec::new();
    for _ in 0..num_actions * num_states {
        transition.extend(one_hot(num_states, &mut rng));
    }
    let mut observation = Vec::new();
    for _ in 0..num_actions * num_states {
        observation.extend(one_hot(num_observations, &mut rng));
    }
    let reward = (0..num_actions * num_states)
        .map(|_| rng.random_range(-10i32..=10) as f64)
        .collect();
    let initial = one_hot(num_states, &mut rng);
    PomdpModel::new(
        num_states,
        num_actions,
        num_observations,
        transition,
        observation,
        reward,
        initial,
    )
    .expect("deterministic model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_models_parse() {
        assert_eq!(tiger().num_actions(), 3);
        assert_eq!(chain().num_states(), 1);
        let g = gridworld();
        assert_eq!(g.num_states(), 9);
        assert_eq!(g.initial_belief_slice()[8], 0.0);
    }

    #[test]
    fn random_models_are_valid_and_seeded() {
        let a = random_model(3, 2, 4, RngSeed(5));
        let b = random_model(3, 2, 4, RngSeed(5));
        assert_eq!(a, b);
        assert!(a.validate().is_empty());
        let d = random_deterministic_model(4, 3, 2, RngSeed(1));
        assert!(d
            .transition_table()
            .iter()
            .chain(d.observation_table())
            .all(|&p| p == 0.0 || p == 1.0));
    }
}
