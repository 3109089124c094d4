//! Policy evaluation: exact joint-distribution propagation, Monte-Carlo
//! rollouts, and an online executor that runs a graph against an environment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, PolicyGraph};
use crate::model::{DenseBelief, ModelError, PomdpModel};
use crate::particle::{particle_belief_update, simulate_rollout, GenerativeModel, ParticleBelief};
use crate::rng::{RngSeed, SimRng, TAG_MC_EVAL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error("environment returned observation {observation}, model has {size}")]
    ObservationOutOfRange { observation: usize, size: usize },
}

/// p(s, q) over state × node for one layer, stored `[q * |S| + s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub num_states: usize,
    pub width: usize,
    pub mass: Vec<f64>,
}

impl JointDistribution {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Joint (state, node) distribution of every layer under `graph` from `b0`.
pub fn joint_distributions(
    model: &PomdpModel,
    b0: &DenseBelief,
    graph: &PolicyGraph,
) -> Result<Vec<JointDistribution>, EvalError> {
    graph.check_model(model)?;
    if b0.len() != model.num_states() {
        return Err(ModelError::DimensionMismatch(format!(
            "belief has {} entries, model has {} states",
            b0.len(),
            model.num_states()
        ))
        .into());
    }
    let ns = model.num_states();
    let no = model.num_observations();
    let width = graph.width();
    let mut layers = Vec::with_capacity(graph.horizon());
    let mut p = vec![0.0; width * ns];
    p[..ns].copy_from_slice(b0.mass());
    for t in 0..graph.horizon() {
        layers.push(JointDistribution {
            num_states: ns,
            width,
            mass: p.clone(),
        });
        if t + 1 == graph.horizon() {
            break;
        }
        let mut next = vec![0.0; width * ns];
        for q in 0..width {
            let a = graph.action(t, q);
            for s in 0..ns {
                let pq = p[q * ns + s];
                if pq == 0.0 {
                    continue;
                }
                for s2 in 0..ns {
                    let pt = model.transition_row(a, s)[s2];
                    if pt == 0.0 {
                        continue;
                    }
                    for o in 0..no {
                        let q2 = graph.successor(t, q, o);
                        next[q2 * ns + s2] += pq * pt * model.observation_row(a, s2)[o];
                    }
                }
            }
        }
        p = next;
    }
    Ok(layers)
}

/// Expected total reward E[Σ_t R(s_t, a_t)] of `graph` from `b0`.
pub fn exact_policy_value(
    model: &PomdpModel,
    b0: &DenseBelief,
    graph: &PolicyGraph,
) -> Result<f64, EvalError> {
    let layers = joint_distributions(model, b0, graph)?;
    let ns = model.num_states();
    let mut total = 0.0;
    for (t, layer) in layers.iter().enumerate() {
        for q in 0..graph.width() {
            let a = graph.action(t, q);
            for s in 0..ns {
                total += layer.mass[q * ns + s] * model.reward(s, a);
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub rollouts: usize,
}

/// Mean and standard error of `n_rollouts` independent episodes from (0, 0).
pub fn mc_policy_value<G: GenerativeModel>(
    gen: &G,
    graph: &PolicyGraph,
    n_rollouts: usize,
    seed: RngSeed,
) -> McEstimate {
    assert!(n_rollouts >= 1, "need at least one rollout");
    let returns: Vec<f64> = (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.stream(&[TAG_MC_EVAL, i as u64]);
            let s0 = gen.sample_initial(&mut rng);
            simulate_rollout(gen, &s0, 0, 0, graph, &mut rng)
        })
        .collect();
    // Welford, so identical returns give an exact mean.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in returns.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let stderr = if n_rollouts > 1 {
        (m2 / (n_rollouts - 1) as f64 / n_rollouts as f64).sqrt()
    } else {
        0.0
    };
    McEstimate {
        mean,
        stderr,
        rollouts: n_rollouts,
    }
}

/// What the agent sees after acting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: usize,
    pub reward: Option<f64>,
}

/// World the executor interacts with.
pub trait Environment {
    /// Starts a new episode with a hidden initial state.
    fn reset(&mut self);
    fn step(&mut self, action: usize) -> StepOutcome;
}

/// Environment backed by a generative model's samplers.
pub struct SimulatedEnvironment<'g, G: GenerativeModel> {
    gen: &'g G,
    rng: SimRng,
    state: Option<G::State>,
}

impl<'g, G: GenerativeModel> SimulatedEnvironment<'g, G> {
    pub fn new(gen: &'g G, seed: RngSeed) -> Self {
        Self {
            gen,
            rng: seed.rng(),
            state: None,
        }
    }

    pub fn state(&self) -> Option<&G::State> {
        self.state.as_ref()
    }
}

impl<G: GenerativeModel> Environment for SimulatedEnvironment<'_, G> {
    fn reset(&mut self) {
        self.state = Some(self.gen.sample_initial(&mut self.rng));
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        if self.state.is_none() {
            self.reset();
        }
        let s = self.state.take().expect("state present after reset");
        let reward = self.gen.reward(&s, action);
        let s2 = self.gen.sample_transition(&s, action, &mut self.rng);
        let observation = self.gen.sample_observation(&s2, action, &mut self.rng);
        self.state = Some(s2);
        StepOutcome {
            observation,
            reward: Some(reward),
        }
    }
}

/// Replays a fixed observation sequence (cycling if it runs out).
pub struct ScriptedEnvironment {
    observations: Vec<usize>,
    cursor: usize,
}

impl ScriptedEnvironment {
    pub fn new(observations: Vec<usize>) -> Self {
        assert!(
            !observations.is_empty(),
            "script needs at least one observation"
        );
        Self {
            observations,
            cursor: 0,
        }
    }
}

impl Environment for ScriptedEnvironment {
    fn reset(&mut self) {
        self.cursor = 0;
    }

    fn step(&mut self, _action: usize) -> StepOutcome {
        let o = self.observations[self.cursor % self.observations.len()];
        self.cursor += 1;
        StepOutcome {
            observation: o,
            reward: None,
        }
    }
}

/// Belief maintained alongside execution. Diagnostic only.
pub enum BeliefTracking<'m> {
    None,
    Exact(&'m PomdpModel),
    Particle { count: usize, seed: RngSeed },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackedBelief<S> {
    Dense(Vec<f64>),
    Particles(ParticleBelief<S>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep<S> {
    pub layer: usize,
    pub node: usize,
    pub action: usize,
    pub observation: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief: Option<TrackedBelief<S>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub impossible_observation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace<S> {
    pub steps: Vec<TraceStep<S>>,
}

impl<S: Serialize> ExecutionTrace<S> {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.steps
            .iter()
            .map(|s| serde_json::to_string(s).expect("trace step serializes") + "\n")
            .collect()
    }
}

impl<S> ExecutionTrace<S> {
    pub fn total_reward(&self) -> Option<f64> {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Runs one T-step episode: emit a_{t,q}, read the observation, follow the
/// stored edge. The tracked belief never influences actions.
pub fn execute_policy<G: GenerativeModel>(
    gen: &G,
    graph: &PolicyGraph,
    env: &mut dyn Environment,
    tracking: BeliefTracking<'_>,
) -> Result<ExecutionTrace<G::State>, EvalError> {
    let no = gen.num_observations();
    let mut exact = match tracking {
        BeliefTracking::Exact(model) => Some((model, model.initial_belief())),
        _ => None,
    };
    let mut particles = match tracking {
        BeliefTracking::Particle { count, seed } => {
            let mut rng = seed.rng();
            let states = (0..count.max(1))
                .map(|_| gen.sample_initial(&mut rng))
                .collect();
            Some((ParticleBelief::unweighted(states), rng, count.max(1)))
        }
        _ => None,
    };

    env.reset();
    let mut steps = Vec::with_capacity(graph.horizon());
    let mut q = 0;
    for t in 0..graph.horizon() {
        let action = graph.action(t, q);
        let outcome = env.step(action);
        let o = outcome.observation;
        if o >= no {
            return Err(EvalError::ObservationOutOfRange {
                observation: o,
                size: no,
            });
        }
        let mut impossible = false;
        let mut belief = None;
        if let Some((model, b)) = exact.as_mut() {
            match model.exact_belief_update(b, action, o) {
                Ok((post, _)) => *b = post,
                Err(ModelError::ImpossibleObservation { .. }) => {
                    impossible = true;
                    *b = DenseBelief::uniform(model.num_states());
                }
                Err(e) => return Err(e.into()),
            }
            belief = Some(TrackedBelief::Dense(b.mass().to_vec()));
        }
        if let Some((b, rng, count)) = particles.as_mut() {
            match particle_belief_update(gen, b, action, o, rng) {
                Ok(post) => *b = post,
                Err(_) => {
                    impossible = true;
                    let states = (0..*count).map(|_| gen.sample_initial(rng)).collect();
                    *b = ParticleBelief::unweighted(states);
                }
            }
            belief = Some(TrackedBelief::Particles(b.clone()));
        }
        steps.push(TraceStep {
            layer: t,
            node: q,
            action,
            observation: o,
            reward: outcome.reward,
            belief,
            impossible_observation: impossible,
        });
        if t + 1 < graph.horizon() {
            q = graph.successor(t, q, o);
        }
    }
    Ok(ExecutionTrace { steps })
}
