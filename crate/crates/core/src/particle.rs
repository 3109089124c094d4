//! Particle-based policy graph improvement for large state spaces.
//!
//! Beliefs are sets of sampled states routed through the graph, and the back
//! pass scores actions and edges with sampled transitions plus Monte-Carlo
//! rollouts of the current graph. Unlike the exact solver, the per-iteration
//! value is not guaranteed to increase.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::mc_policy_value;
use crate::exact::{argmax_incumbent, Method, SolveConfig, SolveError, SolveReport, Termination};
use crate::graph::PolicyGraph;
use crate::model::PomdpModel;
use crate::rng::{
    sample_index, RngSeed, SimRng, TAG_ITERATION, TAG_PARTICLE_BACK, TAG_PARTICLE_FORWARD,
    TAG_REFRESH,
};

/// Sampling interface to a (possibly huge) POMDP.
///
/// Implementations must be deterministic given the generator state. The
/// observation likelihood is only needed by [`particle_belief_update`].
pub trait GenerativeModel: Sync {
    type State: Clone + Send + Sync;

    fn num_actions(&self) -> usize;
    fn num_observations(&self) -> usize;

    fn sample_initial(&self, rng: &mut SimRng) -> Self::State;
    fn sample_transition(&self, s: &Self::State, a: usize, rng: &mut SimRng) -> Self::State;
    fn sample_observation(&self, s_next: &Self::State, a: usize, rng: &mut SimRng) -> usize;
    fn reward(&self, s: &Self::State, a: usize) -> f64;

    /// P(o | s', a), if the model can evaluate it.
    fn observation_likelihood(&self, _s_next: &Self::State, _a: usize, _o: usize) -> Option<f64> {
        None
    }
}

impl GenerativeModel for PomdpModel {
    type State = usize;

    fn num_actions(&self) -> usize {
        PomdpModel::num_actions(self)
    }

    fn num_observations(&self) -> usize {
        PomdpModel::num_observations(self)
    }

    fn sample_initial(&self, rng: &mut SimRng) -> usize {
        sample_index(self.initial_belief_slice(), rng)
    }

    fn sample_transition(&self, s: &usize, a: usize, rng: &mut SimRng) -> usize {
        sample_index(self.transition_row(a, *s), rng)
    }

    fn sample_observation(&self, s_next: &usize, a: usize, rng: &mut SimRng) -> usize {
        sample_index(self.observation_row(a, *s_next), rng)
    }

    fn reward(&self, s: &usize, a: usize) -> f64 {
        PomdpModel::reward(self, *s, a)
    }

    fn observation_likelihood(&self, s_next: &usize, a: usize, o: usize) -> Option<f64> {
        Some(self.observation_row(a, *s_next)[o])
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("impossible observation {observation} after action {action} under the particle set")]
    ImpossibleObservation { action: usize, observation: usize },

    #[error("generative model cannot evaluate observation likelihoods")]
    MissingLikelihood,

    #[error("particle set is empty")]
    Empty,
}

/// Weighted particle approximation b(s) = Σ_i w_i δ(s, s_i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleBelief<S> {
    pub particles: Vec<(f64, S)>,
}

impl<S: Clone> ParticleBelief<S> {
    /// Equal weights 1/N over `states`.
    pub fn unweighted(states: Vec<S>) -> Self {
        let w = 1.0 / states.len().max(1) as f64;
        Self {
            particles: states.into_iter().map(|s| (w, s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|(w, _)| w).sum()
    }
}

impl ParticleBelief<usize> {
    /// Weight per tabular state.
    pub fn histogram(&self, num_states: usize) -> Vec<f64> {
        let mut h = vec![0.0; num_states];
        for &(w, s) in &self.particles {
            h[s] += w;
        }
        h
    }
}

/// Approximate Bayes update: advance each particle through the transition
/// sampler, reweight by the observation likelihood, then normalize.
pub fn particle_belief_update<G: GenerativeModel>(
    gen: &G,
    belief: &ParticleBelief<G::State>,
    action: usize,
    observation: usize,
    rng: &mut SimRng,
) -> Result<ParticleBelief<G::State>, ParticleError> {
    if belief.is_empty() {
        return Err(ParticleError::Empty);
    }
    let mut particles = Vec::with_capacity(belief.len());
    for (w, s) in &belief.particles {
        let s2 = gen.sample_transition(s, action, rng);
        let like = gen
            .observation_likelihood(&s2, action, observation)
            .ok_or(ParticleError::MissingLikelihood)?;
        particles.push((w * like, s2));
    }
    let total: f64 = particles.iter().map(|(w, _)| w).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(ParticleError::ImpossibleObservation {
            action,
            observation,
        });
    }
    particles.iter_mut().for_each(|(w, _)| *w /= total);
    Ok(ParticleBelief { particles })
}

/// Unweighted particle sets per (layer, node), produced by the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBeliefSet<S> {
    horizon: usize,
    width: usize,
    nodes: Vec<Vec<S>>,
}

impl<S> ParticleBeliefSet<S> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn particles(&self, t: usize, q: usize) -> &[S] {
        &self.nodes[t * self.width + q]
    }

    pub fn count(&self, t: usize, q: usize) -> usize {
        self.particles(t, q).len()
    }

    pub fn layer_count(&self, t: usize) -> usize {
        (0..self.width).map(|q| self.count(t, q)).sum()
    }
}

/// Samples `n_particles` initial states into node (0, 0) and routes every
/// particle through the graph: at (t, q) it is advanced under a_{t,q} and
/// moved along the edge of its sampled observation.
pub fn particle_forward_pass<G: GenerativeModel>(
    gen: &G,
    graph: &PolicyGraph,
    n_particles: usize,
    seed: RngSeed,
) -> ParticleBeliefSet<G::State> {
    assert!(n_particles >= 1, "need at least one particle");
    let width = graph.width();
    let horizon = graph.horizon();
    let mut nodes: Vec<Vec<G::State>> = vec![Vec::new(); horizon * width];
    let mut rng = seed.stream(&[TAG_PARTICLE_FORWARD, u64::MAX]);
    nodes[0] = (0..n_particles)
        .map(|_| gen.sample_initial(&mut rng))
        .collect();

    for t in 0..horizon - 1 {
        let layer = &nodes[t * width..(t + 1) * width];
        let routed: Vec<Vec<Vec<G::State>>> = layer
            .par_iter()
            .enumerate()
            .map(|(q, particles)| {
                let mut out = vec![Vec::new(); width];
                if particles.is_empty() {
                    return out;
                }
                let a = graph.action(t, q);
                let mut rng = seed.stream(&[TAG_PARTICLE_FORWARD, t as u64, q as u64]);
                for s in particles {
                    let s2 = gen.sample_transition(s, a, &mut rng);
                    let o = gen.sample_observation(&s2, a, &mut rng);
                    out[graph.successor(t, q, o)].push(s2);
                }
                out
            })
            .collect();
        for per_node in routed {
            for (target, states) in per_node.into_iter().enumerate() {
                nodes[(t + 1) * width + target].extend(states);
            }
        }
    }
    ParticleBeliefSet {
        horizon,
        width,
        nodes,
    }
}

/// Return of one trajectory that starts in `state` at node (t_start, q_start)
/// and follows the graph to the last layer.
pub fn simulate_rollout<G: GenerativeModel>(
    gen: &G,
    state: &G::State,
    t_start: usize,
    q_start: usize,
    graph: &PolicyGraph,
    rng: &mut SimRng,
) -> f64 {
    let mut a = graph.action(t_start, q_start);
    let mut value = gen.reward(state, a);
    let mut s = state.clone();
    let mut q = q_start;
    for t in t_start..graph.horizon() - 1 {
        let s2 = gen.sample_transition(&s, a, rng);
        let o = gen.sample_observation(&s2, a, rng);
        q = graph.successor(t, q, o);
        a = graph.action(t + 1, q);
        value += gen.reward(&s2, a);
        s = s2;
    }
    value
}

/// Sampled back pass. For every node with particles and every action, draws
/// `n_samples` (s, s', o) triples, scores each candidate next node with a
/// rollout of the partially updated graph, and keeps the best action and
/// edges (incumbent first on ties). Nodes without particles keep their
/// incumbent choices unless `refresh_empty` is set, in which case they borrow
/// the particles of a random non-empty node in the same layer.
pub fn particle_back_pass<G: GenerativeModel>(
    gen: &G,
    beliefs: &ParticleBeliefSet<G::State>,
    graph: &PolicyGraph,
    n_samples: usize,
    seed: RngSeed,
    refresh_empty: bool,
) -> PolicyGraph {
    assert!(n_samples >= 1, "need at least one sample");
    let horizon = graph.horizon();
    let width = graph.width();
    let no = gen.num_observations();
    let na = gen.num_actions();
    let mut improved = graph.clone();

    for t in (0..horizon).rev() {
        let non_empty: Vec<usize> = (0..width).filter(|&q| beliefs.count(t, q) > 0).collect();
        let current = &improved;
        let choices: Vec<Option<(usize, Vec<usize>)>> = (0..width)
            .into_par_iter()
            .map(|q| {
                let mut particles = beliefs.particles(t, q);
                if particles.is_empty() {
                    if !refresh_empty || t == 0 || non_empty.is_empty() {
                        return None;
                    }
                    let mut rng = seed.stream(&[TAG_REFRESH, t as u64, q as u64]);
                    let donor = non_empty[rng.random_range(0..non_empty.len())];
                    particles = beliefs.particles(t, donor);
                }
                let incumbent_edges = current.successors_of(t, q);
                let mut action_values = vec![0.0; na];
                let mut action_edges = vec![Vec::new(); na];
                for a in 0..na {
                    let mut immediate = 0.0;
                    let mut future = vec![0.0; if t + 1 < horizon { no * width } else { 0 }];
                    for i in 0..n_samples {
                        let mut rng = seed.stream(&[
                            TAG_PARTICLE_BACK,
                            t as u64,
                            q as u64,
                            a as u64,
                            i as u64,
                        ]);
                        let s = &particles[rng.random_range(0..particles.len())];
                        let s2 = gen.sample_transition(s, a, &mut rng);
                        let o = gen.sample_observation(&s2, a, &mut rng);
                        immediate += gen.reward(s, a);
                        if t + 1 < horizon {
                            for q2 in 0..width {
                                // Same random stream for every candidate.
                                let mut r = rng.clone();
                                future[o * width + q2] +=
                                    simulate_rollout(gen, &s2, t + 1, q2, current, &mut r);
                            }
                        }
                    }
                    let mut total = immediate;
                    if t + 1 < horizon {
                        let mut edges = Vec::with_capacity(no);
                        for o in 0..no {
                            let scores = &future[o * width..(o + 1) * width];
                            let best = argmax_incumbent(scores, incumbent_edges[o]);
                            total += scores[best];
                            edges.push(best);
                        }
                        action_edges[a] = edges;
                    }
                    action_values[a] = total / n_samples as f64;
                }
                let best = argmax_incumbent(&action_values, current.action(t, q));
                Some((best, std::mem::take(&mut action_edges[best])))
            })
            .collect();
        for (q, choice) in choices.into_iter().enumerate() {
            if let Some((a, edges)) = choice {
                improved.set_action(t, q, a);
                for (o, &succ) in edges.iter().enumerate() {
                    improved.set_successor(t, q, o, succ);
                }
            }
        }
    }
    improved
}

/// Particle solver settings on top of the shared [`SolveConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig {
    pub base: SolveConfig,
    pub n_particles: usize,
    /// Samples per (node, action) in the back pass; defaults to `n_particles`.
    pub n_samples: Option<usize>,
    /// Rollouts used to score each iteration's policy.
    pub eval_rollouts: usize,
    pub eval_seed: RngSeed,
}

impl ParticleConfig {
    pub fn new(base: SolveConfig, n_particles: usize) -> Self {
        Self {
            base,
            n_particles,
            n_samples: None,
            eval_rollouts: 10_000,
            eval_seed: RngSeed(0x00e7_a15e),
        }
    }

    pub fn samples(&self) -> usize {
        self.n_samples.unwrap_or(self.n_particles)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        self.base.validate()?;
        if self.n_particles == 0 || self.samples() == 0 || self.eval_rollouts == 0 {
            return Err(SolveError::InvalidConfig(
                "particle, sample and rollout counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleReport {
    pub n_particles: usize,
    pub n_samples: usize,
    pub eval_rollouts: usize,
    pub eval_seed: u64,
    /// Iteration whose policy is returned (highest estimated value).
    pub best_iteration: usize,
    pub final_stderr: f64,
    pub note: String,
}

/// Alternates particle forward and back passes. Each iteration's policy is
/// scored by Monte-Carlo evaluation with a fixed seed; the best-scoring
/// policy is returned.
pub fn ppgi_solve<G: GenerativeModel>(
    gen: &G,
    config: &ParticleConfig,
    initial: Option<PolicyGraph>,
) -> Result<(PolicyGraph, SolveReport), SolveError> {
    ppgi_solve_observed(gen, config, initial, |_, _| {})
}

pub fn ppgi_solve_observed<G: GenerativeModel>(
    gen: &G,
    config: &ParticleConfig,
    initial: Option<PolicyGraph>,
    mut observer: impl FnMut(usize, &PolicyGraph),
) -> Result<(PolicyGraph, SolveReport), SolveError> {
    config.validate()?;
    let base = &config.base;
    let started = Instant::now();
    let mut graph = base.initial_graph(gen.num_actions(), gen.num_observations(), initial)?;
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, PolicyGraph)> = None;
    let mut termination = Termination::IterationLimit;

    for iteration in 1..=base.max_iterations {
        let k = iteration as u64;
        let beliefs = particle_forward_pass(
            gen,
            &graph,
            config.n_particles,
            base.seed.derive(&[TAG_ITERATION, k, 0]),
        );
        let improved = particle_back_pass(
            gen,
            &beliefs,
            &graph,
            config.samples(),
            base.seed.derive(&[TAG_ITERATION, k, 1]),
            base.compression,
        );
        let estimate = mc_policy_value(gen, &improved, config.eval_rollouts, config.eval_seed);
        observer(iteration, &improved);
        history.push(estimate.mean);
        log::debug!(
            "ppgi iteration {iteration}: value {} ± {}",
            estimate.mean,
            estimate.stderr
        );
        if best.as_ref().is_none_or(|(v, ..)| estimate.mean > *v) {
            best = Some((estimate.mean, estimate.stderr, iteration, improved.clone()));
        }
        let unchanged = improved == graph;
        graph = improved;
        if unchanged {
            termination = Termination::Converged;
            break;
        }
        if base.time_limit.is_some_and(|l| started.elapsed() >= l)
            && iteration < base.max_iterations
        {
            termination = Termination::TimeLimit;
            break;
        }
    }

    let (value, stderr, best_iteration, graph) = best.expect("at least one iteration");
    let report = SolveReport {
        method: Method::Particle,
        seed: base.seed.0,
        horizon: base.horizon.get(),
        width: base.width,
        iterations_run: history.len(),
        iteration_values: history,
        termination,
        final_value: value,
        monotone_guaranteed: false,
        particle: Some(ParticleReport {
            n_particles: config.n_particles,
            n_samples: config.samples(),
            eval_rollouts: config.eval_rollouts,
            eval_seed: config.eval_seed.0,
            best_iteration,
            final_stderr: stderr,
            note: "values are Monte-Carlo estimates; monotone improvement is not guaranteed under sampling".into(),
        }),
    };
    Ok((graph, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{back_pass, forward_pass, ValueTable};
    use crate::graph::new_random_policy;
    use crate::model::{DenseBelief, Horizon};
    use crate::models;

    fn h(t: usize) -> Horizon {
        Horizon::new(t).unwrap()
    }

    #[test]
    fn deterministic_width_one_particles_coincide() {
        let m = models::random_deterministic_model(4, 2, 2, RngSeed(3));
        let g = new_random_policy(2, 2, h(4), 1, RngSeed(3));
        let set = particle_forward_pass(&m, &g, 50, RngSeed(1));
        for t in 0..4 {
            let p = set.particles(t, 0);
            assert_eq!(p.len(), 50);
            assert!(p.iter().all(|s| *s == p[0]));
        }
    }

    #[test]
    fn single_particle_occupies_one_node_per_layer() {
        let m = models::random_model(3, 2, 3, RngSeed(9));
        let g = new_random_policy(2, 3, h(5), 3, RngSeed(9));
        let set = particle_forward_pass(&m, &g, 1, RngSeed(2));
        for t in 0..5 {
            assert_eq!((0..3).filter(|&q| set.count(t, q) > 0).count(), 1);
            assert_eq!(set.layer_count(t), 1);
        }
    }

    #[test]
    fn tiger_listen_particles_match_exact_marginal() {
        let m = models::tiger();
        let g = PolicyGraph::uniform(h(2), 1, 3, 2, 0).unwrap();
        let exact = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let set = particle_forward_pass(&m, &g, 100_000, RngSeed(17));
        let left = set.particles(1, 0).iter().filter(|&&s| s == 0).count() as f64 / 1e5;
        assert!((left - exact.belief(1, 0)[0]).abs() < 0.01);
    }

    #[test]
    fn rollout_last_layer_is_immediate_reward() {
        let m = models::tiger();
        let g = new_random_policy(3, 2, h(3), 2, RngSeed(1));
        let mut rng = RngSeed(0).rng();
        let a = g.action(2, 1);
        assert_eq!(simulate_rollout(&m, &1, 2, 1, &g, &mut rng), m.reward(1, a));
    }

    #[test]
    fn rollout_constant_reward() {
        let m = models::constant_reward(3, 2, -0.5);
        let g = new_random_policy(3, 2, h(6), 2, RngSeed(4));
        let mut rng = RngSeed(0).rng();
        assert_eq!(simulate_rollout(&m, &0, 2, 1, &g, &mut rng), -0.5 * 4.0);
    }

    #[test]
    fn rollout_matches_exact_values_on_deterministic_model() {
        let m = models::random_deterministic_model(5, 3, 2, RngSeed(77));
        let g = new_random_policy(3, 2, h(4), 3, RngSeed(78));
        let values = exact_node_values(&m, &g);
        let mut rng = RngSeed(0).rng();
        for t in 0..4 {
            for q in 0..3 {
                for s in 0..5 {
                    let r = simulate_rollout(&m, &s, t, q, &g, &mut rng);
                    assert!((r - values.values(t, q)[s]).abs() < 1e-9);
                }
            }
        }
    }

    /// Values of `g` itself via a back pass on zero beliefs (all incumbents kept).
    fn exact_node_values(m: &PomdpModel, g: &PolicyGraph) -> ValueTable {
        let zero = DenseBelief::zeros(m.num_states());
        let beliefs = forward_pass(m, &zero, g).unwrap();
        let (same, values) = back_pass(m, &beliefs, g).unwrap();
        assert_eq!(&same, g);
        values
    }

    #[test]
    fn belief_update_perfect_observation() {
        let m = PomdpModel::new(
            2,
            1,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![0.5, 0.5],
        )
        .unwrap();
        let b = ParticleBelief::unweighted(vec![0, 1, 0, 1, 1]);
        let post = particle_belief_update(&m, &b, 0, 0, &mut RngSeed(1).rng()).unwrap();
        assert_eq!(post.len(), 5);
        let h = post.histogram(2);
        assert!((h[0] - 1.0).abs() < 1e-12);
        assert_eq!(h[1], 0.0);
    }

    #[test]
    fn belief_update_uniform_likelihood_keeps_weights() {
        let m = models::constant_reward(2, 3, 0.0);
        let b = ParticleBelief {
            particles: vec![(0.2, 0), (0.3, 0), (0.5, 0)],
        };
        let post = particle_belief_update(&m, &b, 1, 2, &mut RngSeed(1).rng()).unwrap();
        for ((w0, _), (w1, _)) in b.particles.iter().zip(&post.particles) {
            assert!((w0 - w1).abs() < 1e-12);
        }
        assert!((post.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn belief_update_impossible_observation() {
        let m = PomdpModel::new(
            2,
            1,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0; 2],
            vec![1.0, 0.0],
        )
        .unwrap();
        let b = ParticleBelief::unweighted(vec![0, 0]);
        assert_eq!(
            particle_belief_update(&m, &b, 0, 1, &mut RngSeed(1).rng()),
            Err(ParticleError::ImpossibleObservation {
                action: 0,
                observation: 1
            })
        );
    }

    #[test]
    fn tiger_particle_posterior() {
        let m = models::tiger();
        let states: Vec<usize> = (0..100_000).map(|i| i % 2).collect();
        let b = ParticleBelief::unweighted(states);
        let post = particle_belief_update(&m, &b, 0, 0, &mut RngSeed(5).rng()).unwrap();
        let hist = post.histogram(2);
        let (exact, _) = m
            .exact_belief_update(&DenseBelief::uniform(2), 0, 0)
            .unwrap();
        let tv = 0.5
            * hist
                .iter()
                .zip(exact.mass())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn tiger_horizon_one_particle_back_pass_listens() {
        let m = models::tiger();
        let g = PolicyGraph::uniform(h(1), 1, 3, 2, 2).unwrap();
        let set = particle_forward_pass(&m, &g, 10_000, RngSeed(1));
        let improved = particle_back_pass(&m, &set, &g, 10_000, RngSeed(2), false);
        assert_eq!(improved.action(0, 0), 0);
    }

    #[test]
    fn unsampled_observation_keeps_incumbent_edge() {
        // Observation 1 is impossible everywhere.
        let m = PomdpModel::new(
            1,
            2,
            2,
            vec![1.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0],
        )
        .unwrap();
        let g = PolicyGraph::from_tables(2, 2, 2, 2, vec![0, 0, 0, 1], vec![0, 1, 0, 1]).unwrap();
        let set = particle_forward_pass(&m, &g, 20, RngSeed(1));
        let improved = particle_back_pass(&m, &set, &g, 20, RngSeed(2), false);
        assert_eq!(improved.successor(0, 0, 1), 1);
    }

    #[test]
    fn deterministic_model_matches_exact_back_pass() {
        for k in 0..10 {
            let m = models::random_deterministic_model(4, 3, 2, RngSeed(100 + k));
            let g = new_random_policy(3, 2, h(4), 3, RngSeed(200 + k));
            let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
            let (exact, _) = back_pass(&m, &beliefs, &g).unwrap();
            let set = particle_forward_pass(&m, &g, 1, RngSeed(k));
            let particle = particle_back_pass(&m, &set, &g, 1, RngSeed(k + 1), false);
            assert_eq!(exact, particle, "instance {k}");
        }
    }

    #[test]
    fn constant_model_converges_immediately() {
        let m = models::constant_reward(2, 2, 3.0);
        let cfg = ParticleConfig::new(crate::exact::SolveConfig::new(h(3), 2), 10);
        let (_, report) = ppgi_solve(&m, &cfg, None).unwrap();
        assert_eq!(report.iterations_run, 1);
        assert_eq!(report.termination, Termination::Converged);
        assert_eq!(report.final_value, 9.0);
    }
}
