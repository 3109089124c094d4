//! Fixed-size layered policy graphs.
//!
//! A graph has `T` layers of `W` nodes. Node `(t, q)` executes one action; for
//! `t < T-1` each observation selects a successor in layer `t+1`. Execution
//! always starts at node 0 of layer 0; the other layer-0 nodes are storage
//! padding and never run.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Horizon, Labels, PomdpModel};
use crate::rng::{RngSeed, TAG_INIT_POLICY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid policy document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyGraph {
    horizon: usize,
    width: usize,
    num_actions: usize,
    num_observations: usize,
    /// `actions[t * W + q]`
    actions: Vec<usize>,
    /// `successors[(t * W + q) * O + o]`, for `t < T-1`
    successors: Vec<usize>,
}

impl PolicyGraph {
    /// Graph where every node runs `action` and every edge goes to node 0.
    pub fn uniform(
        horizon: Horizon,
        width: usize,
        num_actions: usize,
        num_observations: usize,
        action: usize,
    ) -> Result<Self, GraphError> {
        let t = horizon.get();
        Self::from_tables(
            t,
            width,
            num_actions,
            num_observations,
            vec![action; t * width],
            vec![0; (t - 1) * width * num_observations],
        )
    }

    /// Builds a graph from flat tables, checking shape and index ranges.
    pub fn from_tables(
        horizon: usize,
        width: usize,
        num_actions: usize,
        num_observations: usize,
        actions: Vec<usize>,
        successors: Vec<usize>,
    ) -> Result<Self, GraphError> {
        if horizon == 0 || width == 0 || num_actions == 0 || num_observations == 0 {
            return Err(GraphError::DimensionMismatch(
                "horizon, width, |A| and |O| must be positive".into(),
            ));
        }
        if actions.len() != horizon * width {
            return Err(GraphError::DimensionMismatch(format!(
                "action table has {} entries, expected {}",
                actions.len(),
                horizon * width
            )));
        }
        let want = (horizon - 1) * width * num_observations;
        if successors.len() != want {
            return Err(GraphError::DimensionMismatch(format!(
                "successor table has {} entries, expected {want}",
                successors.len()
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(GraphError::IndexOutOfRange {
                what: "action",
                index: a,
                size: num_actions,
            });
        }
        if let Some(&q) = successors.iter().find(|&&q| q >= width) {
            return Err(GraphError::IndexOutOfRange {
                what: "successor",
                index: q,
                size: width,
            });
        }
        Ok(Self {
            horizon,
            width,
            num_actions,
            num_observations,
            actions,
            successors,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn action_table(&self) -> &[usize] {
        &self.actions
    }

    pub fn successor_table(&self) -> &[usize] {
        &self.successors
    }

    /// Nodes that can execute in layer `t`: only node 0 in layer 0.
    pub fn active_nodes(&self, t: usize) -> std::ops::Range<usize> {
        if t == 0 {
            0..1
        } else {
            0..self.width
        }
    }

    #[inline]
    pub fn action(&self, t: usize, q: usize) -> usize {
        self.actions[t * self.width + q]
    }

    #[inline]
    pub fn successor(&self, t: usize, q: usize, o: usize) -> usize {
        self.successors[(t * self.width + q) * self.num_observations + o]
    }

    /// Successor node per observation for `(t, q)`; empty on the last layer.
    #[inline]
    pub fn successors_of(&self, t: usize, q: usize) -> &[usize] {
        if t + 1 >= self.horizon {
            return &[];
        }
        let no = self.num_observations;
        let start = (t * self.width + q) * no;
        &self.successors[start..start + no]
    }

    pub fn set_action(&mut self, t: usize, q: usize, a: usize) {
        assert!(a < self.num_actions, "action {a} out of range");
        self.actions[t * self.width + q] = a;
    }

    pub fn set_successor(&mut self, t: usize, q: usize, o: usize, next: usize) {
        assert!(t + 1 < self.horizon, "last layer has no successors");
        assert!(next < self.width, "successor {next} out of range");
        self.successors[(t * self.width + q) * self.num_observations + o] = next;
    }

    /// Action at `(t, q)` and, except on the last layer, the node reached after `o`.
    pub fn act_and_transition(
        &self,
        t: usize,
        q: usize,
        o: usize,
    ) -> Result<(usize, Option<usize>), GraphError> {
        let check = |what, index, size| {
            if index < size {
                Ok(())
            } else {
                Err(GraphError::IndexOutOfRange { what, index, size })
            }
        };
        check("layer", t, self.horizon)?;
        check("node", q, self.width)?;
        check("observation", o, self.num_observations)?;
        let next = (t + 1 < self.horizon).then(|| self.successor(t, q, o));
        Ok((self.action(t, q), next))
    }

    pub fn check_model(&self, model: &PomdpModel) -> Result<(), GraphError> {
        if self.num_actions != model.num_actions()
            || self.num_observations != model.num_observations()
        {
            return Err(GraphError::DimensionMismatch(format!(
                "policy has |A|={}, |O|={}; model has |A|={}, |O|={}",
                self.num_actions,
                self.num_observations,
                model.num_actions(),
                model.num_observations()
            )));
        }
        Ok(())
    }

    /// Groups (size ≥ 2) of nodes in layer `t` sharing action and successor
    /// vector. On the last layer nodes are grouped by action alone. Groups and
    /// their members are in ascending order.
    pub fn find_redundant_nodes(&self, t: usize) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<(usize, &[usize]), Vec<usize>> = BTreeMap::new();
        for q in 0..self.width {
            groups
                .entry((self.action(t, q), self.successors_of(t, q)))
                .or_default()
                .push(q);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= 2).collect();
        out.sort();
        out
    }

    /// Reachability from the start node, as `reachable[t][q]`.
    pub fn reachable(&self) -> Vec<Vec<bool>> {
        let mut seen = vec![vec![false; self.width]; self.horizon];
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        seen[0][0] = true;
        while let Some((t, q)) = queue.pop_front() {
            for &next in self.successors_of(t, q) {
                if !seen[t + 1][next] {
                    seen[t + 1][next] = true;
                    queue.push_back((t + 1, next));
                }
            }
        }
        seen
    }

    /// Renders the graph in Graphviz DOT, one cluster per layer. Nodes are
    /// labeled with action names and edges with observation names.
    pub fn to_dot(&self, labels: &Labels, reachable_only: bool) -> String {
        let reach = self.reachable();
        let shown = |t: usize, q: usize| {
            if reachable_only {
                reach[t][q]
            } else {
                self.active_nodes(t).contains(&q)
            }
        };
        let mut out = String::new();
        let _ = writeln!(out, "digraph policy {{");
        let _ = writeln!(out, "  rankdir=LR;");
        let _ = writeln!(out, "  node [shape=box];");
        for t in 0..self.horizon {
            let nodes: Vec<usize> = (0..self.width).filter(|&q| shown(t, q)).collect();
            if nodes.is_empty() {
                continue;
            }
            let _ = writeln!(out, "  subgraph cluster_{t} {{");
            let _ = writeln!(out, "    label=\"t={t}\";");
            for q in nodes {
                let _ = writeln!(
                    out,
                    "    n{t}_{q} [label=\"{}\"];",
                    escape(&labels.action(self.action(t, q)))
                );
            }
            let _ = writeln!(out, "  }}");
        }
        for t in 0..self.horizon.saturating_sub(1) {
            for q in (0..self.width).filter(|&q| shown(t, q)) {
                for (o, &next) in self.successors_of(t, q).iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "  n{t}_{q} -> n{}_{next} [label=\"{}\"];",
                        t + 1,
                        escape(&labels.observation(o))
                    );
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Uniformly random action per node and successor per (node, observation).
pub fn new_random_policy(
    num_actions: usize,
    num_observations: usize,
    horizon: Horizon,
    width: usize,
    seed: RngSeed,
) -> PolicyGraph {
    assert!(width >= 1, "width must be at least 1");
    let t = horizon.get();
    let mut rng = seed.stream(&[TAG_INIT_POLICY]);
    let actions = (0..t * width)
        .map(|_| rng.random_range(0..num_actions))
        .collect();
    let successors = (0..(t - 1) * width * num_observations)
        .map(|_| rng.random_range(0..width))
        .collect();
    PolicyGraph::from_tables(t, width, num_actions, num_observations, actions, successors)
        .expect("random graph is well formed")
}

const POLICY_FORMAT: &str = "pgi-policy";
const POLICY_VERSION: u32 = 1;

/// Native policy document: dimensions, flat tables and the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub horizon: usize,
    pub width: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    pub actions: Vec<usize>,
    pub successors: Vec<usize>,
}

impl PolicyDocument {
    pub fn new(graph: &PolicyGraph, seed: Option<RngSeed>) -> Self {
        Self {
            format: POLICY_FORMAT.into(),
            version: POLICY_VERSION,
            seed: seed.map(|s| s.0),
            horizon: graph.horizon,
            width: graph.width,
            num_actions: graph.num_actions,
            num_observations: graph.num_observations,
            actions: graph.actions.clone(),
            successors: graph.successors.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("policy serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: Self =
            serde_json::from_str(text).map_err(|e| GraphError::Document(e.to_string()))?;
        if doc.format != POLICY_FORMAT {
            return Err(GraphError::Document(format!(
                "unexpected format tag '{}'",
                doc.format
            )));
        }
        if doc.version != POLICY_VERSION {
            return Err(GraphError::Document(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        Ok(doc)
    }

    pub fn into_graph(self) -> Result<PolicyGraph, GraphError> {
        PolicyGraph::from_tables(
            self.horizon,
            self.width,
            self.num_actions,
            self.num_observations,
            self.actions,
            self.successors,
        )
    }
}
