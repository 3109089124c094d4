//! C ABI for the `pgi` solver.
//!
//! Models and policies are opaque heap handles released with their `_free`
//! functions. Every fallible call returns a [`PgiStatus`]; on failure the
//! message is available from [`pgi_last_error`] on the same thread. Strings
//! handed out by the library are released with [`pgi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::time::Duration;

use pgi::eval::{exact_policy_value, mc_policy_value};
use pgi::exact::{self, SolveConfig, SolveError};
use pgi::format::{load_model, parse_pomdp_text, FormatError, ModelSource};
use pgi::graph::{GraphError, PolicyDocument, PolicyGraph};
use pgi::model::{Horizon, Labels, PomdpModel};
use pgi::particle::{ppgi_solve, ParticleConfig};
use pgi::rng::RngSeed;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    DimensionMismatch = 5,
    Panic = 6,
}

/// Parsed POMDP model.
pub struct PgiModel(PomdpModel);

/// Layered policy graph.
pub struct PgiPolicy(PolicyGraph);

/// Solver settings. Obtain defaults from [`pgi_solve_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgiSolveOptions {
    pub horizon: usize,
    pub width: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub value_epsilon: f64,
    /// Seconds; zero or negative means no limit.
    pub time_limit: f64,
    pub compression: bool,
    pub particle: bool,
    pub n_particles: usize,
    /// Zero means `n_particles`.
    pub n_samples: usize,
    pub eval_rollouts: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (PgiStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PgiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgiStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            PgiStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (PgiStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    (PgiStatus::InvalidArgument, msg.into())
}

fn format_failure(e: FormatError) -> Failure {
    let status = match e {
        FormatError::Io { .. } => PgiStatus::Io,
        _ => PgiStatus::Parse,
    };
    (status, e.to_string())
}

fn graph_failure(e: GraphError) -> Failure {
    let status = match e {
        GraphError::Document(_) => PgiStatus::Parse,
        _ => PgiStatus::DimensionMismatch,
    };
    (status, e.to_string())
}

fn solve_failure(e: SolveError) -> Failure {
    let status = match e {
        SolveError::InvalidConfig(_) => PgiStatus::InvalidArgument,
        SolveError::Graph(_) | SolveError::Model(_) => PgiStatus::DimensionMismatch,
    };
    (status, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| invalid("output contains a nul byte"))?;
    write_out(out, c.into_raw(), "out")
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pgi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pgi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a `.pomdp` document.
///
/// # Safety
/// `text` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_model_parse(
    text: *const c_char,
    out: *mut *mut PgiModel,
) -> PgiStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let model = parse_pomdp_text(&ModelSource::inline(text)).map_err(format_failure)?;
        write_out(out, Box::into_raw(Box::new(PgiModel(model))), "out")
    })
}

/// Loads a model file in `.pomdp` or native JSON form.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_model_load(path: *const c_char, out: *mut *mut PgiModel) -> PgiStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = load_model(Path::new(path)).map_err(format_failure)?;
        write_out(out, Box::into_raw(Box::new(PgiModel(model))), "out")
    })
}

/// # Safety
/// `model` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pgi_model_free(model: *mut PgiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_model_dims(
    model: *const PgiModel,
    num_states: *mut usize,
    num_actions: *mut usize,
    num_observations: *mut usize,
) -> PgiStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        write_out(num_states, m.num_states(), "num_states")?;
        write_out(num_actions, m.num_actions(), "num_actions")?;
        write_out(num_observations, m.num_observations(), "num_observations")
    })
}

#[no_mangle]
pub extern "C" fn pgi_solve_options_default() -> PgiSolveOptions {
    PgiSolveOptions {
        horizon: 1,
        width: 1,
        max_iterations: 100,
        seed: 0,
        value_epsilon: 1e-9,
        time_limit: 0.0,
        compression: false,
        particle: false,
        n_particles: 1000,
        n_samples: 0,
        eval_rollouts: 10_000,
    }
}

/// Runs exact or particle PGI. On success writes the policy handle and the
/// final value reported by the solver.
///
/// # Safety
/// `model` and `options` must be valid; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_solve(
    model: *const PgiModel,
    options: *const PgiSolveOptions,
    out_policy: *mut *mut PgiPolicy,
    out_value: *mut f64,
) -> PgiStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        let o = *ref_arg(options, "options")?;
        if out_policy.is_null() {
            return Err(null("out_policy"));
        }
        let horizon =
            Horizon::new(o.horizon).ok_or_else(|| invalid("horizon must be at least 1"))?;
        let mut config = SolveConfig::new(horizon, o.width);
        config.max_iterations = o.max_iterations;
        config.seed = RngSeed(o.seed);
        config.value_epsilon = o.value_epsilon;
        config.compression = o.compression;
        if o.time_limit > 0.0 {
            config.time_limit = Some(
                Duration::try_from_secs_f64(o.time_limit)
                    .map_err(|_| invalid("time_limit out of range"))?,
            );
        }
        let (graph, report) = if o.particle {
            let mut pc = ParticleConfig::new(config, o.n_particles);
            pc.n_samples = (o.n_samples > 0).then_some(o.n_samples);
            pc.eval_rollouts = o.eval_rollouts;
            ppgi_solve(m, &pc, None)
        } else {
            exact::pgi_solve(m, &config, None)
        }
        .map_err(solve_failure)?;
        if !out_value.is_null() {
            out_value.write(report.final_value);
        }
        out_policy.write(Box::into_raw(Box::new(PgiPolicy(graph))));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_free(policy: *mut PgiPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// # Safety
/// `policy` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_dims(
    policy: *const PgiPolicy,
    horizon: *mut usize,
    width: *mut usize,
) -> PgiStatus {
    guard(|| {
        let g = &ref_arg(policy, "policy")?.0;
        write_out(horizon, g.horizon(), "horizon")?;
        write_out(width, g.width(), "width")
    })
}

/// Action of node `node` in layer `layer`.
///
/// # Safety
/// `policy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_action(
    policy: *const PgiPolicy,
    layer: usize,
    node: usize,
    out: *mut usize,
) -> PgiStatus {
    guard(|| {
        let g = &ref_arg(policy, "policy")?.0;
        if layer >= g.horizon() || node >= g.width() {
            return Err(invalid(format!("node ({layer}, {node}) out of range")));
        }
        write_out(out, g.action(layer, node), "out")
    })
}

/// Successor in layer `layer + 1` after observing `observation`. Fails on
/// the last layer.
///
/// # Safety
/// `policy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_successor(
    policy: *const PgiPolicy,
    layer: usize,
    node: usize,
    observation: usize,
    out: *mut usize,
) -> PgiStatus {
    guard(|| {
        let g = &ref_arg(policy, "policy")?.0;
        if layer + 1 >= g.horizon() || node >= g.width() || observation >= g.num_observations() {
            return Err(invalid(format!(
                "edge ({layer}, {node}, {observation}) out of range"
            )));
        }
        write_out(out, g.successor(layer, node, observation), "out")
    })
}

/// Parses a native policy document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_from_json(
    json: *const c_char,
    out: *mut *mut PgiPolicy,
) -> PgiStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let graph = PolicyDocument::from_json(text)
            .and_then(PolicyDocument::into_graph)
            .map_err(graph_failure)?;
        write_out(out, Box::into_raw(Box::new(PgiPolicy(graph))), "out")
    })
}

/// Native policy document. Free the result with [`pgi_string_free`].
///
/// # Safety
/// `policy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_to_json(
    policy: *const PgiPolicy,
    out: *mut *mut c_char,
) -> PgiStatus {
    guard(|| {
        let g = &ref_arg(policy, "policy")?.0;
        write_string(out, PolicyDocument::new(g, None).to_json())
    })
}

/// Graphviz DOT text. `model` may be null; when given, its names label the
/// graph. Free the result with [`pgi_string_free`].
///
/// # Safety
/// `policy` must be a live handle, `model` null or live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_to_dot(
    policy: *const PgiPolicy,
    model: *const PgiModel,
    reachable_only: bool,
    out: *mut *mut c_char,
) -> PgiStatus {
    guard(|| {
        let g = &ref_arg(policy, "policy")?.0;
        let labels = match model.as_ref() {
            Some(m) => {
                g.check_model(&m.0).map_err(graph_failure)?;
                m.0.labels().clone()
            }
            None => Labels::default(),
        };
        write_string(out, g.to_dot(&labels, reachable_only))
    })
}

/// Exact expected total reward of `policy` from the model's initial belief.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_exact_value(
    model: *const PgiModel,
    policy: *const PgiPolicy,
    out: *mut f64,
) -> PgiStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        let g = &ref_arg(policy, "policy")?.0;
        let v = exact_policy_value(m, &m.initial_belief(), g)
            .map_err(|e| (PgiStatus::DimensionMismatch, e.to_string()))?;
        write_out(out, v, "out")
    })
}

/// Monte-Carlo estimate of the policy value from `rollouts` episodes.
///
/// # Safety
/// Handles must be live; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pgi_policy_mc_value(
    model: *const PgiModel,
    policy: *const PgiPolicy,
    rollouts: usize,
    seed: u64,
    out_mean: *mut f64,
    out_stderr: *mut f64,
) -> PgiStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        let g = &ref_arg(policy, "policy")?.0;
        if rollouts == 0 {
            return Err(invalid("rollouts must be positive"));
        }
        g.check_model(m).map_err(graph_failure)?;
        let est = mc_policy_value(m, g, rollouts, RngSeed(seed));
        write_out(out_mean, est.mean, "out_mean")?;
        write_out(out_stderr, est.stderr, "out_stderr")
    })
}
