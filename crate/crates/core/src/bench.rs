//! Desk-scale acceptance suite, shared by `pgi bench` and the `acceptance`
//! test target. Each criterion returns its measured values and a verdict.

use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::eval::{exact_policy_value, mc_policy_value};
use crate::exact::{back_pass, forward_pass, pgi_solve, pgi_solve_observed, SolveConfig};
use crate::format::{
    parse_pomdp_text, parse_pomdp_text_with_warnings, serialize_model, ModelSource,
};
use crate::graph::{new_random_policy, PolicyDocument};
use crate::model::{DenseBelief, Horizon, Labels, PomdpModel};
use crate::models;
use crate::oracle;
use crate::particle::{
    particle_back_pass, particle_belief_update, particle_forward_pass, ppgi_solve, ParticleBelief,
    ParticleConfig,
};
use crate::rng::RngSeed;

pub const MONOTONE_TOLERANCE: f64 = 1e-9;
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;
pub const MASS_TOLERANCE: f64 = 1e-9;
pub const OPTIMALITY_TOLERANCE: f64 = 1e-6;
pub const OPTIMALITY_RATE: f64 = 0.95;
pub const ANCHOR_TOLERANCE: f64 = 1e-9;
pub const PARTICLE_VALUE_GAP: f64 = 0.3;
pub const PARTICLE_TV_LIMIT: f64 = 0.01;
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Smaller instance counts for a fast smoke run.
    pub quick: bool,
    /// Base seeds; the randomized suites run once per seed.
    pub seeds: Vec<u64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            quick: false,
            seeds: vec![0],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
    pub elapsed_secs: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}. {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.elapsed_secs
        )
    }
}

fn h(t: usize) -> Horizon {
    Horizon::new(t).expect("positive horizon")
}

/// One randomized instance of the improvement suite.
#[derive(Debug, Clone)]
pub struct SuiteInstance {
    pub model: PomdpModel,
    pub horizon: usize,
    pub width: usize,
    pub seed: RngSeed,
}

/// Tiger plus `count` random models with |S|,|A|,|O| ≤ 4, T ≤ 6, W ≤ 3.
pub fn improvement_suite(base_seed: u64, count: usize) -> Vec<SuiteInstance> {
    let mut rng = RngSeed(base_seed).stream(&[0xbe4c_0001]);
    let mut out = Vec::with_capacity(count + 3);
    for (t, w) in [(3, 2), (6, 3), (4, 1)] {
        out.push(SuiteInstance {
            model: models::tiger(),
            horizon: t,
            width: w,
            seed: RngSeed(rng.random()),
        });
    }
    for _ in 0..count {
        let ns = rng.random_range(1..=4);
        let na = rng.random_range(1..=4);
        let no = rng.random_range(1..=4);
        out.push(SuiteInstance {
            model: models::random_model(ns, na, no, RngSeed(rng.random())),
            horizon: rng.random_range(1..=6),
            width: rng.random_range(1..=3),
            seed: RngSeed(rng.random()),
        });
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct ImprovementStats {
    pub instances: usize,
    pub iterations: usize,
    pub monotone_violations: usize,
    pub worst_decrease: f64,
    pub consistency_violations: usize,
    pub worst_consistency_gap: f64,
    pub mass_violations: usize,
    pub worst_mass_error: f64,
    pub elapsed: Duration,
}

/// Runs exact PGI (compression off) on the suite, checking monotonicity,
/// back-pass/evaluator agreement after every back pass, and forward-pass
/// mass conservation.
pub fn improvement_checks(seeds: &[u64], count: usize) -> ImprovementStats {
    let started = Instant::now();
    let mut stats = ImprovementStats::default();
    for &seed in seeds {
        for inst in improvement_suite(seed, count) {
            let m = &inst.model;
            let b0 = m.initial_belief();
            let mut cfg = SolveConfig::new(h(inst.horizon), inst.width);
            cfg.seed = inst.seed;
            let mut values = Vec::new();
            pgi_solve_observed(m, &cfg, None, |rec| {
                stats.iterations += 1;
                values.push(rec.value);
                let exact = exact_policy_value(m, &b0, rec.improved).expect("dims match");
                let gap = (rec.value - exact).abs();
                stats.worst_consistency_gap = stats.worst_consistency_gap.max(gap);
                if gap >= CONSISTENCY_TOLERANCE {
                    stats.consistency_violations += 1;
                }
                for t in 0..inst.horizon {
                    let err = (rec.beliefs.layer_mass(t) - 1.0).abs();
                    stats.worst_mass_error = stats.worst_mass_error.max(err);
                    if err > MASS_TOLERANCE {
                        stats.mass_violations += 1;
                    }
                }
            })
            .expect("solver runs");
            for pair in values.windows(2) {
                let drop = pair[0] - pair[1];
                stats.worst_decrease = stats.worst_decrease.max(drop);
                if drop > MONOTONE_TOLERANCE {
                    stats.monotone_violations += 1;
                }
            }
            stats.instances += 1;
        }
    }
    stats.elapsed = started.elapsed();
    stats
}

fn result(
    id: u32,
    name: &'static str,
    passed: bool,
    measured: String,
    elapsed: Duration,
) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed,
        measured,
        elapsed_secs: elapsed.as_secs_f64(),
    }
}

/// Criteria 1-3 share one sweep over the improvement suite.
pub fn criteria_improvement(config: &BenchConfig) -> [CriterionResult; 3] {
    let count = if config.quick { 25 } else { 100 };
    let s = improvement_checks(&config.seeds, count);
    let budget = Duration::from_secs(30) * config.seeds.len() as u32;
    [
        result(
            1,
            "monotone improvement",
            s.monotone_violations == 0 && s.elapsed < budget,
            format!(
                "{} instances, {} iterations, {} decreases (worst {:.3e}), runtime {:.2}s",
                s.instances,
                s.iterations,
                s.monotone_violations,
                s.worst_decrease.max(0.0),
                s.elapsed.as_secs_f64()
            ),
            s.elapsed,
        ),
        result(
            2,
            "back-pass/evaluator consistency",
            s.consistency_violations == 0,
            format!(
                "{} back passes, {} mismatches (worst gap {:.3e})",
                s.iterations, s.consistency_violations, s.worst_consistency_gap
            ),
            s.elapsed,
        ),
        result(
            3,
            "forward-pass mass conservation",
            s.mass_violations == 0,
            format!(
                "{} forward passes, {} bad layers (worst error {:.3e})",
                s.iterations, s.mass_violations, s.worst_mass_error
            ),
            s.elapsed,
        ),
    ]
}

#[derive(Debug, Clone)]
pub struct OptimalityStats {
    pub instances: usize,
    pub matched: usize,
    pub worst_gap: f64,
    pub elapsed: Duration,
}

impl OptimalityStats {
    pub fn rate(&self) -> f64 {
        self.matched as f64 / self.instances.max(1) as f64
    }
}

/// Best of `restarts` PGI runs against exhaustive plan enumeration on random
/// instances with |S|,|A|,|O| ≤ 3, T ≤ 3 and at most 1e5 plans. The width
/// |O|^(T-1) lets the graph represent every plan tree.
pub fn optimality_check(base_seed: u64, instances: usize, restarts: usize) -> OptimalityStats {
    let started = Instant::now();
    let mut rng = RngSeed(base_seed).stream(&[0xbe4c_0004]);
    let mut matched = 0;
    let mut worst_gap: f64 = 0.0;
    let mut done = 0;
    while done < instances {
        let ns = rng.random_range(1..=3);
        let na = rng.random_range(1..=3);
        let no = rng.random_range(1..=3);
        let t = rng.random_range(1..=3);
        if oracle::tree_policy_count(na, no, t) > 100_000 {
            continue;
        }
        let m = models::random_model(ns, na, no, RngSeed(rng.random()));
        let optimum = oracle::enumerate_optimum(&m, t);
        let width = no.pow(t as u32 - 1);
        let best = (0..restarts)
            .map(|r| {
                let mut cfg = SolveConfig::new(h(t), width);
                cfg.seed = RngSeed(base_seed).derive(&[done as u64, r as u64]);
                pgi_solve(&m, &cfg, None)
                    .expect("solver runs")
                    .1
                    .final_value
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = optimum - best;
        worst_gap = worst_gap.max(gap);
        if gap.abs() <= OPTIMALITY_TOLERANCE {
            matched += 1;
        }
        done += 1;
    }
    OptimalityStats {
        instances: done,
        matched,
        worst_gap,
        elapsed: started.elapsed(),
    }
}

pub fn criterion_optimality(config: &BenchConfig) -> CriterionResult {
    let instances = if config.quick { 15 } else { 200 };
    let mut total = 0;
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    let started = Instant::now();
    for &seed in &config.seeds {
        let s = optimality_check(seed, instances, 20);
        total += s.instances;
        matched += s.matched;
        worst = worst.max(s.worst_gap);
    }
    let elapsed = started.elapsed();
    let rate = matched as f64 / total.max(1) as f64;
    result(
        4,
        "desk-scale optimality",
        rate >= OPTIMALITY_RATE && elapsed < Duration::from_secs(300) * config.seeds.len() as u32,
        format!(
            "{matched}/{total} instances at the enumerated optimum (rate {:.3}, worst gap {:.3e})",
            rate, worst
        ),
        elapsed,
    )
}

/// Exact PGI and plan enumeration on tiger for T = 1, 2.
pub fn tiger_anchor_values(seed: u64) -> [(f64, f64); 2] {
    let m = models::tiger();
    [(1, 1), (2, 2)].map(|(t, w)| {
        let mut cfg = SolveConfig::new(h(t), w);
        cfg.seed = RngSeed(seed);
        let value = pgi_solve(&m, &cfg, None)
            .expect("solver runs")
            .1
            .final_value;
        (value, oracle::enumerate_optimum(&m, t))
    })
}

pub fn criterion_tiger(config: &BenchConfig) -> CriterionResult {
    let started = Instant::now();
    let mut ok = true;
    let mut measured = Vec::new();
    for &seed in &config.seeds {
        let [(v1, o1), (v2, o2)] = tiger_anchor_values(seed);
        ok &= (v1 + 1.0).abs() <= ANCHOR_TOLERANCE && (o1 + 1.0).abs() <= ANCHOR_TOLERANCE;
        ok &= (v2 + 2.0).abs() <= ANCHOR_TOLERANCE && (o2 + 2.0).abs() <= ANCHOR_TOLERANCE;
        measured.push(format!(
            "seed {seed}: T=1 {v1} (oracle {o1}), T=2 {v2} (oracle {o2})"
        ));
    }
    result(
        5,
        "tiger anchors",
        ok,
        measured.join("; "),
        started.elapsed(),
    )
}

#[derive(Debug, Clone)]
pub struct ParticleStats {
    pub exact_value: f64,
    pub best_particle_value: f64,
    pub best_particle_stderr: f64,
    pub worst_tv: f64,
    pub tv_instances: usize,
}

/// PPGI on tiger (T=2, W=2) best of `restarts` seeds, scored with an
/// independent Monte-Carlo evaluation, and particle posteriors against the
/// exact Bayes update on random models.
pub fn particle_checks(
    base_seed: u64,
    n_particles: usize,
    iterations: usize,
    restarts: usize,
    tv_models: usize,
) -> ParticleStats {
    let m = models::tiger();
    let mut cfg = SolveConfig::new(h(2), 2);
    cfg.seed = RngSeed(base_seed);
    let exact_value = pgi_solve(&m, &cfg, None)
        .expect("solver runs")
        .1
        .final_value;

    let mut best = (f64::NEG_INFINITY, 0.0);
    for r in 0..restarts {
        let mut base = SolveConfig::new(h(2), 2);
        base.max_iterations = iterations;
        base.seed = RngSeed(base_seed).derive(&[0x9a, r as u64]);
        let mut pc = ParticleConfig::new(base, n_particles);
        pc.eval_rollouts = n_particles;
        let (graph, _) = ppgi_solve(&m, &pc, None).expect("solver runs");
        let est = mc_policy_value(
            &m,
            &graph,
            100_000,
            RngSeed(base_seed).derive(&[0x9b, r as u64]),
        );
        if est.mean > best.0 {
            best = (est.mean, est.stderr);
        }
    }

    let mut rng = RngSeed(base_seed).stream(&[0xbe4c_0006]);
    let mut worst_tv: f64 = 0.0;
    for k in 0..tv_models {
        let ns = rng.random_range(2..=4);
        let na = rng.random_range(1..=3);
        let no = rng.random_range(2..=3);
        let model = models::random_model(ns, na, no, RngSeed(rng.random()));
        let a = rng.random_range(0..na);
        let prior = model.initial_belief();
        let marginals: Vec<f64> = (0..no)
            .map(|o| {
                model
                    .exact_belief_update(&prior, a, o)
                    .map(|(_, z)| z)
                    .unwrap_or(0.0)
            })
            .collect();
        let likely: Vec<usize> = (0..no)
            .filter(|&o| marginals[o] >= 0.5 / no as f64)
            .collect();
        let o = likely[rng.random_range(0..likely.len())];
        let (exact, _) = model
            .exact_belief_update(&prior, a, o)
            .expect("likely observation");
        let particles = stratified_particles(&prior, 100_000);
        let post = particle_belief_update(
            &model,
            &particles,
            a,
            o,
            &mut RngSeed(base_seed).stream(&[0xbe4c_0007, k as u64]),
        )
        .expect("likely observation");
        let hist = post.histogram(ns);
        let tv = 0.5
            * hist
                .iter()
                .zip(exact.mass())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
        worst_tv = worst_tv.max(tv);
    }
    ParticleStats {
        exact_value,
        best_particle_value: best.0,
        best_particle_stderr: best.1,
        worst_tv,
        tv_instances: tv_models,
    }
}

/// `n` particles representing `belief` exactly: equal counts per state with
/// weights proportional to the state's probability.
pub fn stratified_particles(belief: &DenseBelief, n: usize) -> ParticleBelief<usize> {
    let ns = belief.len();
    let per = (n / ns).max(1);
    let mut particles = Vec::with_capacity(per * ns);
    for (s, &p) in belief.mass().iter().enumerate() {
        for _ in 0..per {
            particles.push((p / per as f64, s));
        }
    }
    ParticleBelief { particles }
}

pub fn criterion_particle(config: &BenchConfig) -> CriterionResult {
    let started = Instant::now();
    let (restarts, tv_models) = if config.quick { (2, 5) } else { (5, 20) };
    let mut ok = true;
    let mut measured = Vec::new();
    for &seed in &config.seeds {
        let s = particle_checks(seed, 10_000, 20, restarts, tv_models);
        let gap = (s.exact_value - s.best_particle_value).abs();
        ok &= gap <= PARTICLE_VALUE_GAP && s.worst_tv < PARTICLE_TV_LIMIT;
        measured.push(format!(
            "seed {seed}: PPGI {:.4} ± {:.4} vs exact {:.4} (gap {:.4}); worst TV {:.4} over {} models",
            s.best_particle_value, s.best_particle_stderr, s.exact_value, gap, s.worst_tv, s.tv_instances
        ));
    }
    let elapsed = started.elapsed();
    ok &= elapsed < Duration::from_secs(120) * config.seeds.len() as u32;
    result(6, "particle consistency", ok, measured.join("; "), elapsed)
}

/// Particle back pass with one particle against the exact back pass on
/// random models with 0/1 tables. Returns (instances, mismatches).
pub fn variance_free_check(base_seed: u64, instances: usize) -> (usize, usize) {
    let mut rng = RngSeed(base_seed).stream(&[0xbe4c_0007]);
    let mut mismatches = 0;
    for k in 0..instances {
        let ns = rng.random_range(1..=6);
        let na = rng.random_range(1..=4);
        let no = rng.random_range(1..=3);
        let t = rng.random_range(1..=5);
        let w = rng.random_range(1..=3);
        let m = models::random_deterministic_model(ns, na, no, RngSeed(rng.random()));
        let g = new_random_policy(na, no, h(t), w, RngSeed(rng.random()));
        let beliefs = forward_pass(&m, &m.initial_belief(), &g).expect("dims match");
        let (exact, _) = back_pass(&m, &beliefs, &g).expect("dims match");
        let particles = particle_forward_pass(&m, &g, 1, RngSeed(base_seed).derive(&[k as u64, 1]));
        let sampled = particle_back_pass(
            &m,
            &particles,
            &g,
            1,
            RngSeed(base_seed).derive(&[k as u64, 2]),
            false,
        );
        if exact != sampled {
            mismatches += 1;
        }
    }
    (instances, mismatches)
}

pub fn criterion_variance_free(config: &BenchConfig) -> CriterionResult {
    let started = Instant::now();
    let (mut n, mut bad) = (0, 0);
    for &seed in &config.seeds {
        let (i, m) = variance_free_check(seed, 20);
        n += i;
        bad += m;
    }
    result(
        7,
        "variance-free equivalence",
        bad == 0,
        format!("{n} deterministic models, {bad} policy mismatches"),
        started.elapsed(),
    )
}

/// Serialized policy and report from one exact and one particle solve,
/// run inside a pool of `threads` workers.
pub fn solve_artifacts(seed: u64, threads: usize) -> Vec<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        let mut out = Vec::new();
        let grid = models::gridworld();
        let mut cfg = SolveConfig::new(h(5), 3);
        cfg.seed = RngSeed(seed);
        cfg.compression = true;
        cfg.max_iterations = 20;
        let (g, report) = pgi_solve(&grid, &cfg, None).expect("solver runs");
        out.push(PolicyDocument::new(&g, Some(cfg.seed)).to_json());
        out.push(report.to_json());

        let tiger = models::tiger();
        let mut base = SolveConfig::new(h(3), 2);
        base.seed = RngSeed(seed);
        base.max_iterations = 4;
        let mut pc = ParticleConfig::new(base, 500);
        pc.eval_rollouts = 2_000;
        let (g, report) = ppgi_solve(&tiger, &pc, None).expect("solver runs");
        out.push(PolicyDocument::new(&g, Some(RngSeed(seed))).to_json());
        out.push(report.to_json());
        out
    })
}

pub fn criterion_reproducibility(config: &BenchConfig) -> CriterionResult {
    let started = Instant::now();
    let mut identical = true;
    for &seed in &config.seeds {
        let reference = solve_artifacts(seed, 1);
        for threads in [1, 2, 4] {
            identical &= solve_artifacts(seed, threads) == reference;
        }
    }
    result(
        8,
        "reproducibility",
        identical,
        format!(
            "exact+particle artifacts under 1/2/4 threads {}",
            if identical {
                "byte-identical"
            } else {
                "DIFFER"
            }
        ),
        started.elapsed(),
    )
}

/// Largest table difference after parse(serialize(m)), or infinity if the
/// document fails to parse or labels change.
pub fn round_trip_error(model: &PomdpModel) -> f64 {
    let Ok(back) = parse_pomdp_text(&serialize_model(model)) else {
        return f64::INFINITY;
    };
    if back.num_states() != model.num_states()
        || back.num_actions() != model.num_actions()
        || back.num_observations() != model.num_observations()
    {
        return f64::INFINITY;
    }
    let pairs = [
        (back.transition_table(), model.transition_table()),
        (back.observation_table(), model.observation_table()),
        (back.reward_table(), model.reward_table()),
        (back.initial_belief_slice(), model.initial_belief_slice()),
    ];
    pairs
        .iter()
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

pub fn round_trip_suite(base_seed: u64, random: usize) -> Vec<PomdpModel> {
    let mut out: Vec<PomdpModel> = models::BUNDLED
        .iter()
        .map(|(name, text)| {
            parse_pomdp_text_with_warnings(&ModelSource::new(*text, *name))
                .expect("bundled model parses")
                .model
        })
        .collect();
    let mut rng = RngSeed(base_seed).stream(&[0xbe4c_0009]);
    for k in 0..random {
        let ns = rng.random_range(1..=6);
        let na = rng.random_range(1..=4);
        let no = rng.random_range(1..=4);
        let mut m = models::random_model(ns, na, no, RngSeed(rng.random()));
        if k % 2 == 0 {
            m = m.with_labels(Labels {
                states: Some((0..ns).map(|i| format!("state-{i}")).collect()),
                actions: Some((0..na).map(|i| format!("act_{i}")).collect()),
                observations: None,
            });
        }
        out.push(m);
    }
    out
}

pub fn criterion_round_trip(config: &BenchConfig) -> CriterionResult {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &seed in &config.seeds {
        for m in round_trip_suite(seed, 50) {
            worst = worst.max(round_trip_error(&m));
            count += 1;
        }
    }
    result(
        9,
        "parser round-trip",
        worst <= ROUND_TRIP_TOLERANCE,
        format!("{count} models, worst table error {worst:.3e}"),
        started.elapsed(),
    )
}

/// Every criterion in order.
pub fn run(config: &BenchConfig) -> Vec<CriterionResult> {
    let mut out: Vec<CriterionResult> = criteria_improvement(config).into();
    out.push(criterion_optimality(config));
    out.push(criterion_tiger(config));
    out.push(criterion_particle(config));
    out.push(criterion_variance_free(config));
    out.push(criterion_reproducibility(config));
    out.push(criterion_round_trip(config));
    out
}
