//! Policy graph improvement for finite-horizon POMDPs.
//!
//! A policy is a layered graph of `T` layers with `W` nodes each. Every node
//! carries an action and one successor per observation. Exact PGI alternates
//! a forward pass over node beliefs with a back pass that re-optimizes each
//! node; particle PGI replaces both with sampling against a generative model.

pub mod bench;
pub mod eval;
pub mod exact;
pub mod format;
pub mod graph;
pub mod model;
pub mod models;
pub mod oracle;
pub mod particle;
pub mod rng;

pub use eval::{
    exact_policy_value, execute_policy, mc_policy_value, BeliefTracking, Environment, EvalError,
    ExecutionTrace, McEstimate, ScriptedEnvironment, SimulatedEnvironment, StepOutcome,
};
pub use exact::{
    back_pass, forward_pass, pgi_solve, BeliefSet, SolveConfig, SolveError, SolveReport,
    Termination, ValueTable,
};
pub use format::{load_model, parse_pomdp_text, serialize_model, FormatError, ModelSource};
pub use graph::{new_random_policy, GraphError, PolicyDocument, PolicyGraph};
pub use model::{DenseBelief, Horizon, Labels, ModelError, PomdpModel};
pub use particle::{
    particle_back_pass, particle_belief_update, particle_forward_pass, ppgi_solve, GenerativeModel,
    ParticleBelief, ParticleConfig, ParticleError,
};
pub use rng::RngSeed;
