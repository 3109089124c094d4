//! Exact (tabular) policy graph improvement.
//!
//! Each iteration projects the initial belief through the current graph
//! (forward pass) and then re-optimizes every node's action and outgoing edges
//! against those beliefs, from the last layer back to the first (back pass).
//! With incumbent-preferring tie-breaking the value of the policy never
//! decreases between iterations.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{new_random_policy, GraphError, PolicyGraph};
use crate::model::{DenseBelief, Horizon, ModelError, PomdpModel};
use crate::models::simplex_point;
use crate::rng::{RngSeed, TAG_COMPRESS, TAG_ITERATION};

/// Relative margin a candidate must beat the current best by to replace it.
/// Smaller differences are treated as ties, so floating-point noise never
/// displaces the incumbent choice.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[inline]
pub(crate) fn improves(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_TOLERANCE * best.abs().max(1.0)
}

/// Index of the best score: starts from `incumbent` and only moves to a
/// strictly better candidate, scanning in ascending index order.
pub(crate) fn argmax_incumbent(scores: &[f64], incumbent: usize) -> usize {
    let mut best = incumbent;
    for (i, &s) in scores.iter().enumerate() {
        if i != best && improves(s, scores[best]) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Non-normalized beliefs b_{t,q}(s) for every layer and node.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet {
    horizon: usize,
    width: usize,
    num_states: usize,
    data: Vec<f64>,
}

impl BeliefSet {
    fn zeros(horizon: usize, width: usize, num_states: usize) -> Self {
        Self {
            horizon,
            width,
            num_states,
            data: vec![0.0; horizon * width * num_states],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn belief(&self, t: usize, q: usize) -> &[f64] {
        let n = self.num_states;
        let start = (t * self.width + q) * n;
        &self.data[start..start + n]
    }

    fn layer_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.width * self.num_states;
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn node_mass(&self, t: usize, q: usize) -> f64 {
        self.belief(t, q).iter().sum()
    }

    pub fn layer_mass(&self, t: usize) -> f64 {
        (0..self.width).map(|q| self.node_mass(t, q)).sum()
    }
}

/// Per-node state values V_{t,q}(s) of the policy produced by a back pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    horizon: usize,
    width: usize,
    num_states: usize,
    data: Vec<f64>,
}

impl ValueTable {
    fn zeros(horizon: usize, width: usize, num_states: usize) -> Self {
        Self {
            horizon,
            width,
            num_states,
            data: vec![0.0; horizon * width * num_states],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self, t: usize, q: usize) -> &[f64] {
        let n = self.num_states;
        let start = (t * self.width + q) * n;
        &self.data[start..start + n]
    }

    fn values_mut(&mut self, t: usize, q: usize) -> &mut [f64] {
        let n = self.num_states;
        let start = (t * self.width + q) * n;
        &mut self.data[start..start + n]
    }

    fn layer(&self, t: usize) -> &[f64] {
        let n = self.width * self.num_states;
        &self.data[t * n..(t + 1) * n]
    }
}

fn check_dims(model: &PomdpModel, graph: &PolicyGraph) -> Result<(), SolveError> {
    graph.check_model(model)?;
    Ok(())
}

/// Projects `b0` through `graph`, returning b_{t,q} for every layer.
pub fn forward_pass(
    model: &PomdpModel,
    b0: &DenseBelief,
    graph: &PolicyGraph,
) -> Result<BeliefSet, SolveError> {
    check_dims(model, graph)?;
    model.check_belief(b0)?;
    let ns = model.num_states();
    let no = model.num_observations();
    let width = graph.width();
    let mut beliefs = BeliefSet::zeros(graph.horizon(), width, ns);
    beliefs.layer_mut(0)[..ns].copy_from_slice(b0.mass());

    for t in 0..graph.horizon() - 1 {
        // Predicted next-state mass of each active node.
        let predicted: Vec<Option<Vec<f64>>> = graph
            .active_nodes(t)
            .into_par_iter()
            .map(|q| {
                let b = beliefs.belief(t, q);
                if b.iter().all(|&x| x == 0.0) {
                    return None;
                }
                let mut pred = vec![0.0; ns];
                model.predict_into(b, graph.action(t, q), &mut pred);
                Some(pred)
            })
            .collect();

        let next = beliefs.layer_mut(t + 1);
        next.par_chunks_mut(ns)
            .enumerate()
            .for_each(|(target, out)| {
                for (q, pred) in predicted.iter().enumerate() {
                    let Some(pred) = pred else { continue };
                    let a = graph.action(t, q);
                    for (o, &succ) in graph.successors_of(t, q).iter().enumerate() {
                        if succ != target {
                            continue;
                        }
                        for (s2, x) in out.iter_mut().enumerate() {
                            *x += pred[s2] * model.observation_row(a, s2)[o];
                        }
                    }
                }
            });
        let _ = no;
    }
    Ok(beliefs)
}

/// Action, edges and value vector chosen for one node.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NodeChoice {
    pub action: usize,
    pub successors: Vec<usize>,
    pub values: Vec<f64>,
}

/// One node of the back pass against `belief`. `next_values` holds the
/// next layer's value vectors (`W * |S|`), or `None` on the last layer.
#[allow(clippy::needless_range_loop)]
pub(crate) fn optimize_node(
    model: &PomdpModel,
    belief: &[f64],
    next_values: Option<&[f64]>,
    incumbent_action: usize,
    incumbent_successors: &[usize],
) -> NodeChoice {
    let ns = model.num_states();
    let no = model.num_observations();
    let na = model.num_actions();
    let has_mass = belief.iter().any(|&x| x != 0.0);

    let (action, successors) = if !has_mass {
        (incumbent_action, incumbent_successors.to_vec())
    } else {
        let mut scores = vec![0.0; na];
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); na];
        let mut pred = vec![0.0; ns];
        let mut g = vec![0.0; ns];
        for a in 0..na {
            let immediate: f64 = belief
                .iter()
                .zip(model.reward_row(a))
                .map(|(b, r)| b * r)
                .sum();
            let mut future = 0.0;
            if let Some(next) = next_values {
                let width = next.len() / ns;
                model.predict_into(belief, a, &mut pred);
                let mut chosen = Vec::with_capacity(no);
                let mut node_scores = vec![0.0; width];
                for o in 0..no {
                    for s2 in 0..ns {
                        g[s2] = pred[s2] * model.observation_row(a, s2)[o];
                    }
                    for (q2, score) in node_scores.iter_mut().enumerate() {
                        *score = g
                            .iter()
                            .zip(&next[q2 * ns..(q2 + 1) * ns])
                            .map(|(x, v)| x * v)
                            .sum();
                    }
                    let best = argmax_incumbent(&node_scores, incumbent_successors[o]);
                    future += node_scores[best];
                    chosen.push(best);
                }
                edges[a] = chosen;
            }
            scores[a] = immediate + future;
        }
        let best = argmax_incumbent(&scores, incumbent_action);
        (best, std::mem::take(&mut edges[best]))
    };

    let values = node_values(model, action, &successors, next_values);
    NodeChoice {
        action,
        successors,
        values,
    }
}

/// V(s) = R(s,a) + Σ_{s'} P(s'|s,a) Σ_o P(o|s',a) V_next[succ(o)](s').
pub(crate) fn node_values(
    model: &PomdpModel,
    action: usize,
    successors: &[usize],
    next_values: Option<&[f64]>,
) -> Vec<f64> {
    let ns = model.num_states();
    let mut values = model.reward_row(action).to_vec();
    if let Some(next) = next_values {
        let w: Vec<f64> = (0..ns)
            .map(|s2| {
                model
                    .observation_row(action, s2)
                    .iter()
                    .zip(successors)
                    .map(|(p, &q2)| p * next[q2 * ns + s2])
                    .sum()
            })
            .collect();
        for (s, v) in values.iter_mut().enumerate() {
            *v += model
                .transition_row(action, s)
                .iter()
                .zip(&w)
                .map(|(p, x)| p * x)
                .sum::<f64>();
        }
    }
    values
}

/// Dynamic-programming back pass against the beliefs of the previous forward
/// pass. Returns the improved graph and the exact values of that graph.
pub fn back_pass(
    model: &PomdpModel,
    beliefs: &BeliefSet,
    graph: &PolicyGraph,
) -> Result<(PolicyGraph, ValueTable), SolveError> {
    check_dims(model, graph)?;
    if beliefs.horizon != graph.horizon()
        || beliefs.width != graph.width()
        || beliefs.num_states != model.num_states()
    {
        return Err(SolveError::Model(ModelError::DimensionMismatch(
            "belief set does not match graph/model".into(),
        )));
    }
    let horizon = graph.horizon();
    let width = graph.width();
    let ns = model.num_states();
    let mut improved = graph.clone();
    let mut values = ValueTable::zeros(horizon, width, ns);

    for t in (0..horizon).rev() {
        let next_layer = (t + 1 < horizon).then(|| values.layer(t + 1).to_vec());
        let choices: Vec<NodeChoice> = (0..width)
            .into_par_iter()
            .map(|q| {
                optimize_node(
                    model,
                    beliefs.belief(t, q),
                    next_layer.as_deref(),
                    graph.action(t, q),
                    graph.successors_of(t, q),
                )
            })
            .collect();
        for (q, choice) in choices.into_iter().enumerate() {
            improved.set_action(t, q, choice.action);
            for (o, &succ) in choice.successors.iter().enumerate() {
                improved.set_successor(t, q, o, succ);
            }
            values.values_mut(t, q).copy_from_slice(&choice.values);
        }
    }
    Ok((improved, values))
}

/// Σ_s b0(s) V_{0,0}(s).
pub fn policy_value_from_table(b0: &DenseBelief, values: &ValueTable) -> f64 {
    b0.dot(values.values(0, 0))
}

/// Re-optimizes redundant nodes against random beliefs.
///
/// Layers are processed from last to second. In each redundancy group the
/// member with the most belief mass is kept; edges in the previous layer that
/// point at the other members are redirected to it, and the freed members get
/// a fresh action and edges computed for a belief drawn uniformly from the
/// simplex. The returned value table stays exact for the returned graph.
pub fn compress_policy(
    graph: &PolicyGraph,
    model: &PomdpModel,
    beliefs: &BeliefSet,
    values: &ValueTable,
    seed: RngSeed,
) -> (PolicyGraph, ValueTable) {
    let mut graph = graph.clone();
    let mut values = values.clone();
    let horizon = graph.horizon();
    let ns = model.num_states();
    for t in (1..horizon).rev() {
        for group in graph.find_redundant_nodes(t) {
            let keep = group.iter().copied().fold(group[0], |best, q| {
                if beliefs.node_mass(t, q) > beliefs.node_mass(t, best) {
                    q
                } else {
                    best
                }
            });
            for &freed in group.iter().filter(|&&q| q != keep) {
                for p in 0..graph.width() {
                    for o in 0..graph.num_observations() {
                        if graph.successor(t - 1, p, o) == freed {
                            graph.set_successor(t - 1, p, o, keep);
                        }
                    }
                }
                let mut rng = seed.stream(&[TAG_COMPRESS, t as u64, freed as u64]);
                let belief = simplex_point(ns, &mut rng);
                let next = (t + 1 < horizon).then(|| values.layer(t + 1).to_vec());
                let choice = optimize_node(
                    model,
                    &belief,
                    next.as_deref(),
                    graph.action(t, freed),
                    graph.successors_of(t, freed),
                );
                graph.set_action(t, freed, choice.action);
                for (o, &succ) in choice.successors.iter().enumerate() {
                    graph.set_successor(t, freed, o, succ);
                }
                values.values_mut(t, freed).copy_from_slice(&choice.values);
            }
        }
    }
    (graph, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub horizon: Horizon,
    pub width: usize,
    pub max_iterations: usize,
    pub time_limit: Option<Duration>,
    pub value_epsilon: f64,
    pub compression: bool,
    pub seed: RngSeed,
}

impl SolveConfig {
    pub fn new(horizon: Horizon, width: usize) -> Self {
        Self {
            horizon,
            width,
            max_iterations: 100,
            time_limit: None,
            value_epsilon: 1e-9,
            compression: false,
            seed: RngSeed(0),
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.width == 0 {
            return Err(SolveError::InvalidConfig("width must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(SolveError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.value_epsilon >= 0.0 && self.value_epsilon.is_finite()) {
            return Err(SolveError::InvalidConfig(
                "value_epsilon must be a finite non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn initial_graph(
        &self,
        num_actions: usize,
        num_observations: usize,
        initial: Option<PolicyGraph>,
    ) -> Result<PolicyGraph, SolveError> {
        match initial {
            Some(g) => {
                if g.horizon() != self.horizon.get()
                    || g.width() != self.width
                    || g.num_actions() != num_actions
                    || g.num_observations() != num_observations
                {
                    return Err(SolveError::Graph(GraphError::DimensionMismatch(
                        "initial policy does not match model/config dimensions".into(),
                    )));
                }
                Ok(g)
            }
            None => Ok(new_random_policy(
                num_actions,
                num_observations,
                self.horizon,
                self.width,
                self.seed,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationLimit,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Particle,
}

/// Outcome of a solver run. Contains no timing data, so identical runs give
/// identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub seed: u64,
    pub horizon: usize,
    pub width: usize,
    pub iteration_values: Vec<f64>,
    pub iterations_run: usize,
    pub termination: Termination,
    pub final_value: f64,
    pub monotone_guaranteed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particle: Option<crate::particle::ParticleReport>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// State handed to a [`pgi_solve_observed`] observer after each iteration.
pub struct IterationRecord<'a> {
    pub iteration: usize,
    /// Forward-pass beliefs of the policy that entered this iteration.
    pub beliefs: &'a BeliefSet,
    pub previous: &'a PolicyGraph,
    pub improved: &'a PolicyGraph,
    pub values: &'a ValueTable,
    pub value: f64,
}

/// Alternates forward and back passes (plus compression when enabled)
/// until the policy stops changing, the value improves by less than
/// `value_epsilon`, or an iteration/time limit is hit.
pub fn pgi_solve(
    model: &PomdpModel,
    config: &SolveConfig,
    initial: Option<PolicyGraph>,
) -> Result<(PolicyGraph, SolveReport), SolveError> {
    pgi_solve_observed(model, config, initial, |_| {})
}

pub fn pgi_solve_observed(
    model: &PomdpModel,
    config: &SolveConfig,
    initial: Option<PolicyGraph>,
    mut observer: impl FnMut(&IterationRecord<'_>),
) -> Result<(PolicyGraph, SolveReport), SolveError> {
    config.validate()?;
    let started = Instant::now();
    let b0 = model.initial_belief();
    let mut graph = config.initial_graph(model.num_actions(), model.num_observations(), initial)?;
    let mut history = Vec::new();
    let mut termination = Termination::IterationLimit;

    for iteration in 1..=config.max_iterations {
        let beliefs = forward_pass(model, &b0, &graph)?;
        let (mut improved, mut values) = back_pass(model, &beliefs, &graph)?;
        if config.compression {
            let seed = config.seed.derive(&[TAG_ITERATION, iteration as u64]);
            (improved, values) = compress_policy(&improved, model, &beliefs, &values, seed);
        }
        let value = policy_value_from_table(&b0, &values);
        observer(&IterationRecord {
            iteration,
            beliefs: &beliefs,
            previous: &graph,
            improved: &improved,
            values: &values,
            value,
        });
        let unchanged = improved == graph;
        let stalled = history
            .last()
            .is_some_and(|&prev: &f64| value - prev < config.value_epsilon);
        history.push(value);
        graph = improved;
        log::debug!("pgi iteration {iteration}: value {value}");
        if unchanged || stalled {
            termination = Termination::Converged;
            break;
        }
        if config
            .time_limit
            .is_some_and(|limit| started.elapsed() >= limit)
            && iteration < config.max_iterations
        {
            termination = Termination::TimeLimit;
            break;
        }
    }

    let report = SolveReport {
        method: Method::Exact,
        seed: config.seed.0,
        horizon: config.horizon.get(),
        width: config.width,
        iterations_run: history.len(),
        final_value: *history.last().expect("at least one iteration"),
        iteration_values: history,
        termination,
        monotone_guaranteed: !config.compression,
        particle: None,
    };
    Ok((graph, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::exact_policy_value;
    use crate::models;
    use proptest::prelude::*;

    fn h(t: usize) -> Horizon {
        Horizon::new(t).unwrap()
    }

    #[test]
    fn single_state_mass_sits_on_reachable_nodes() {
        let m = models::constant_reward(2, 2, 1.0);
        let g = new_random_policy(2, 2, h(4), 3, RngSeed(8));
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let reach = g.reachable();
        for (t, layer) in reach.iter().enumerate() {
            assert!((beliefs.layer_mass(t) - 1.0).abs() < 1e-12);
            for (q, &reachable) in layer.iter().enumerate() {
                if !reachable {
                    assert_eq!(beliefs.node_mass(t, q), 0.0);
                }
            }
        }
    }

    #[test]
    fn unreachable_node_gets_no_mass() {
        let m = models::random_deterministic_model(3, 2, 2, RngSeed(4));
        let g = PolicyGraph::from_tables(3, 2, 2, 2, vec![0, 1, 1, 0, 0, 1], vec![0; 8]).unwrap();
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        for t in 1..3 {
            assert_eq!(beliefs.node_mass(t, 1), 0.0);
            assert!((beliefs.node_mass(t, 0) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tiger_listen_forward_pass() {
        let m = models::tiger();
        let g = PolicyGraph::uniform(h(2), 1, 3, 2, 0).unwrap();
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        // Brute force over (s, o, s').
        let mut expect = [0.0; 2];
        for s in 0..2 {
            for o in 0..2 {
                for (s2, e) in expect.iter_mut().enumerate() {
                    *e += 0.5 * m.joint_prob(s, 0, s2, o).unwrap();
                }
            }
        }
        let b = beliefs.belief(1, 0);
        assert!((b[0] - 0.5).abs() < 1e-12 && (b[1] - 0.5).abs() < 1e-12);
        assert!((b[0] - expect[0]).abs() < 1e-15);
        assert!((beliefs.layer_mass(1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiger_horizon_one_back_pass_listens() {
        let m = models::tiger();
        let g = PolicyGraph::uniform(h(1), 1, 3, 2, 1).unwrap();
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let (improved, values) = back_pass(&m, &beliefs, &g).unwrap();
        assert_eq!(improved.action(0, 0), 0);
        assert_eq!(values.values(0, 0), &[-1.0, -1.0]);
        assert_eq!(policy_value_from_table(&m.initial_belief(), &values), -1.0);
    }

    #[test]
    fn last_layer_maximizes_immediate_reward() {
        let m = models::random_model(3, 3, 2, RngSeed(12));
        let g = new_random_policy(3, 2, h(2), 2, RngSeed(1));
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let (improved, _) = back_pass(&m, &beliefs, &g).unwrap();
        for q in 0..2 {
            let b = beliefs.belief(1, q);
            let score =
                |a: usize| -> f64 { b.iter().zip(m.reward_row(a)).map(|(x, r)| x * r).sum() };
            let best = (0..3).map(score).fold(f64::NEG_INFINITY, f64::max);
            assert!((score(improved.action(1, q)) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mass_node_keeps_incumbent() {
        let m = models::tiger();
        // node 1 of layer 1 is unreachable; it opens a door.
        let g = PolicyGraph::from_tables(2, 2, 3, 2, vec![0, 0, 0, 1], vec![0, 0, 0, 0]).unwrap();
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let (improved, _) = back_pass(&m, &beliefs, &g).unwrap();
        assert_eq!(improved.action(1, 1), 1);
        assert_eq!(improved.successors_of(0, 1), &[0, 0]);
    }

    #[test]
    fn value_from_table_basics() {
        let m = models::constant_reward(2, 1, 2.5);
        let (_, report) = pgi_solve(&m, &SolveConfig::new(h(4), 2), None).unwrap();
        assert_eq!(report.iteration_values[0], 10.0);
        let zeros = ValueTable::zeros(1, 1, 1);
        assert_eq!(
            policy_value_from_table(&DenseBelief::uniform(1), &zeros),
            0.0
        );
    }

    #[test]
    fn tiger_horizon_one_solve() {
        let m = models::tiger();
        let (g, report) = pgi_solve(&m, &SolveConfig::new(h(1), 1), None).unwrap();
        assert_eq!(report.final_value, -1.0);
        assert_eq!(report.termination, Termination::Converged);
        assert!(report.iterations_run <= 2);
        assert_eq!(g.action(0, 0), 0);
    }

    #[test]
    fn tiger_horizon_two_solve() {
        let m = models::tiger();
        let mut cfg = SolveConfig::new(h(2), 2);
        cfg.seed = RngSeed(7);
        let (g, report) = pgi_solve(&m, &cfg, None).unwrap();
        assert!((report.final_value + 2.0).abs() < 1e-9);
        assert_eq!(g.action(0, 0), 0);
        assert!((exact_policy_value(&m, &m.initial_belief(), &g).unwrap() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let m = models::tiger();
        let mut cfg = SolveConfig::new(h(2), 2);
        cfg.max_iterations = 0;
        assert!(matches!(
            pgi_solve(&m, &cfg, None),
            Err(SolveError::InvalidConfig(_))
        ));
        let cfg = SolveConfig::new(h(3), 2);
        let wrong = new_random_policy(3, 2, h(2), 2, RngSeed(0));
        assert!(pgi_solve(&m, &cfg, Some(wrong)).is_err());
    }

    #[test]
    fn compression_leaves_distinct_graph_alone() {
        let m = models::tiger();
        let g = PolicyGraph::from_tables(2, 2, 3, 2, vec![0, 0, 1, 2], vec![0, 1, 0, 0]).unwrap();
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let (g2, values) = back_pass(&m, &beliefs, &g).unwrap();
        if (0..2).all(|t| g2.find_redundant_nodes(t).is_empty() || t == 0) {
            let (g3, _) = compress_policy(&g2, &m, &beliefs, &values, RngSeed(1));
            assert_eq!(g3, g2);
        }
        let w1 = PolicyGraph::uniform(h(3), 1, 3, 2, 0).unwrap();
        let beliefs = forward_pass(&m, &m.initial_belief(), &w1).unwrap();
        let (w1b, v) = back_pass(&m, &beliefs, &w1).unwrap();
        assert_eq!(compress_policy(&w1b, &m, &beliefs, &v, RngSeed(3)).0, w1b);
    }

    #[test]
    fn compression_reoptimizes_one_of_two_twins() {
        let m = models::random_model(3, 3, 2, RngSeed(21));
        // Layer 1 nodes 0 and 1 are identical; node 0 carries all the mass.
        let g = PolicyGraph::from_tables(2, 2, 3, 2, vec![0, 0, 1, 1], vec![0, 0, 0, 0]).unwrap();
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let values = {
            let mut v = ValueTable::zeros(2, 2, 3);
            for q in 0..2 {
                let vals = node_values(&m, 1, &[], None);
                v.values_mut(1, q).copy_from_slice(&vals);
            }
            for q in 0..2 {
                let vals = node_values(&m, 0, g.successors_of(0, q), Some(v.layer(1)));
                v.values_mut(0, q).copy_from_slice(&vals);
            }
            v
        };
        let (g2, v2) = compress_policy(&g, &m, &beliefs, &values, RngSeed(5));
        assert_eq!(g2.action(1, 0), 1);
        assert_eq!(v2.values(1, 0), values.values(1, 0));
        // node 1 was re-targeted at a random belief
        let b = simplex_point(3, &mut RngSeed(5).stream(&[TAG_COMPRESS, 1, 1]));
        let best = (0..3)
            .map(|a| {
                b.iter()
                    .zip(m.reward_row(a))
                    .map(|(x, r)| x * r)
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let got: f64 = b
            .iter()
            .zip(m.reward_row(g2.action(1, 1)))
            .map(|(x, r)| x * r)
            .sum();
        assert!((got - best).abs() < 1e-12);
        assert!(
            (policy_value_from_table(&m.initial_belief(), &v2)
                - exact_policy_value(&m, &m.initial_belief(), &g2).unwrap())
            .abs()
                < 1e-9
        );
    }

    #[test]
    fn back_pass_reads_only_given_beliefs() {
        // Beliefs from the incumbent graph, not the one being written.
        let m = models::random_model(3, 2, 2, RngSeed(30));
        let g = new_random_policy(2, 2, h(4), 2, RngSeed(31));
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
        let snapshot = beliefs.clone();
        let (a, va) = back_pass(&m, &beliefs, &g).unwrap();
        let (b, vb) = back_pass(&m, &snapshot, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(va, vb);
        assert_eq!(beliefs, snapshot);
    }

    fn random_instance() -> impl Strategy<Value = (usize, usize, usize, usize, usize, u64)> {
        (
            1usize..=6,
            1usize..=3,
            1usize..=3,
            1usize..=5,
            1usize..=3,
            any::<u64>(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn forward_pass_conserves_mass((ns, na, no, t, w, seed) in random_instance()) {
            let m = models::random_model(ns, na, no, RngSeed(seed));
            let g = new_random_policy(na, no, h(t), w, RngSeed(seed ^ 1));
            let beliefs = forward_pass(&m, &m.initial_belief(), &g).unwrap();
            for layer in 0..t {
                prop_assert!((beliefs.layer_mass(layer) - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn table_value_matches_evaluator((ns, na, no, t, w, seed) in random_instance()) {
            let m = models::random_model(ns, na, no, RngSeed(seed));
            let g = new_random_policy(na, no, h(t), w, RngSeed(seed ^ 2));
            let b0 = m.initial_belief();
            let beliefs = forward_pass(&m, &b0, &g).unwrap();
            let (improved, values) = back_pass(&m, &beliefs, &g).unwrap();
            let exact = exact_policy_value(&m, &b0, &improved).unwrap();
            prop_assert!((policy_value_from_table(&b0, &values) - exact).abs() < 1e-9);
        }

        #[test]
        fn values_are_monotone((ns, na, no, t, w, seed) in random_instance()) {
            let m = models::random_model(ns, na, no, RngSeed(seed));
            let mut cfg = SolveConfig::new(h(t), w);
            cfg.seed = RngSeed(seed ^ 3);
            cfg.value_epsilon = 0.0;
            let (_, report) = pgi_solve(&m, &cfg, None).unwrap();
            for pair in report.iteration_values.windows(2) {
                prop_assert!(pair[1] >= pair[0] - 1e-9);
            }
        }

        #[test]
        fn compressed_tables_stay_exact((ns, na, no, t, w, seed) in random_instance()) {
            let m = models::random_model(ns, na, no, RngSeed(seed));
            let mut cfg = SolveConfig::new(h(t), w);
            cfg.seed = RngSeed(seed ^ 4);
            cfg.compression = true;
            cfg.max_iterations = 5;
            let b0 = m.initial_belief();
            let mut failures = 0;
            pgi_solve_observed(&m, &cfg, None, |rec| {
                let exact = exact_policy_value(&m, &b0, rec.improved).unwrap();
                if (rec.value - exact).abs() >= 1e-9 {
                    failures += 1;
                }
            }).unwrap();
            prop_assert_eq!(failures, 0);
        }
    }
}
