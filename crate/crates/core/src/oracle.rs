//! Brute-force reference computations used by the benchmark suite and tests.
//!
//! Nothing here calls the solvers or evaluators; values are computed straight
//! from the model tables by enumeration.

#![allow(clippy::needless_range_loop)]

use crate::model::PomdpModel;

/// Number of nodes in a depth-`horizon` conditional plan tree, saturating
/// at `usize::MAX`.
pub fn tree_size(num_observations: usize, horizon: usize) -> usize {
    let mut total: usize = 0;
    let mut layer: usize = 1;
    for _ in 0..horizon {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(num_observations);
    }
    total
}

/// Number of distinct deterministic conditional plans, saturating at `u64::MAX`.
pub fn tree_policy_count(num_actions: usize, num_observations: usize, horizon: usize) -> u64 {
    let nodes = tree_size(num_observations, horizon);
    let mut count: u64 = 1;
    for _ in 0..nodes {
        count = count.saturating_mul(num_actions as u64);
        if count == u64::MAX || count <= 1 {
            break;
        }
    }
    count
}

/// Expected total reward of a conditional plan tree stored breadth-first:
/// node `i` at depth `d` has children `first(d+1) + (i - first(d)) * |O| + o`.
pub fn tree_value(model: &PomdpModel, plan: &[usize], horizon: usize) -> f64 {
    let ns = model.num_states();
    let no = model.num_observations();
    let b0 = model.initial_belief_slice().to_vec();
    // (tree node, unnormalized belief)
    let mut frontier = vec![(0usize, b0)];
    let mut first = 0usize;
    let mut total = 0.0;
    for depth in 0..horizon {
        let width = no.pow(depth as u32);
        let next_first = first + width;
        let mut next = Vec::with_capacity(frontier.len() * no);
        for (node, b) in frontier {
            let a = plan[node];
            for s in 0..ns {
                total += b[s] * model.reward(s, a);
            }
            if depth + 1 == horizon {
                continue;
            }
            for o in 0..no {
                let mut child = vec![0.0; ns];
                for s in 0..ns {
                    if b[s] == 0.0 {
                        continue;
                    }
                    for s2 in 0..ns {
                        child[s2] += b[s]
                            * model.transition_table()[(a * ns + s) * ns + s2]
                            * model.observation_table()[(a * ns + s2) * no + o];
                    }
                }
                next.push((next_first + (node - first) * no + o, child));
            }
        }
        frontier = next;
        first = next_first;
    }
    total
}

/// Best value over every deterministic conditional plan of the given depth,
/// found by enumerating all `|A|^nodes` action assignments.
pub fn enumerate_optimum(model: &PomdpModel, horizon: usize) -> f64 {
    let na = model.num_actions();
    let nodes = tree_size(model.num_observations(), horizon);
    let mut plan = vec![0usize; nodes];
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(tree_value(model, &plan, horizon));
        // odometer increment
        let mut i = 0;
        loop {
            if i == nodes {
                return best;
            }
            plan[i] += 1;
            if plan[i] < na {
                break;
            }
            plan[i] = 0;
            i += 1;
        }
    }
}

/// Optimal finite-horizon value by recursion over action-observation
/// histories with unnormalized beliefs.
pub fn history_optimum(model: &PomdpModel, horizon: usize) -> f64 {
    fn rec(model: &PomdpModel, b: &[f64], steps: usize) -> f64 {
        let ns = model.num_states();
        let no = model.num_observations();
        (0..model.num_actions())
            .map(|a| {
                let mut v: f64 = (0..ns).map(|s| b[s] * model.reward(s, a)).sum();
                if steps > 1 {
                    for o in 0..no {
                        let mut child = vec![0.0; ns];
                        for s in 0..ns {
                            for s2 in 0..ns {
                                child[s2] += b[s]
                                    * model.transition_table()[(a * ns + s) * ns + s2]
                                    * model.observation_table()[(a * ns + s2) * no + o];
                            }
                        }
                        if child.iter().any(|&x| x > 0.0) {
                            v += rec(model, &child, steps - 1);
                        }
                    }
                }
                v
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    rec(model, model.initial_belief_slice(), horizon)
}
