use std::collections::{BTreeSet, VecDeque};

use pgi::exact::{pgi_solve, pgi_solve_observed, SolveConfig};
use pgi::graph::PolicyGraph;
use pgi::model::Horizon;
use pgi::models;
use pgi::oracle;
use pgi::particle::{ppgi_solve, ppgi_solve_observed, ParticleConfig};
use pgi::rng::RngSeed;
use pgi::{exact_policy_value, mc_policy_value};

fn h(t: usize) -> Horizon {
    Horizon::new(t).unwrap()
}

fn reachable_nodes(g: &PolicyGraph) -> BTreeSet<(usize, usize)> {
    let mut seen = BTreeSet::from([(0, 0)]);
    let mut queue = VecDeque::from([(0, 0)]);
    while let Some((t, q)) = queue.pop_front() {
        if t + 1 == g.horizon() {
            continue;
        }
        for o in 0..g.num_observations() {
            let next = (t + 1, g.successor(t, q, o));
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

#[test]
fn reachable_dot_matches_breadth_first_search() {
    let m = models::tiger();
    let mut cfg = SolveConfig::new(h(3), 3);
    cfg.seed = RngSeed(5);
    let (g, _) = pgi_solve(&m, &cfg, None).unwrap();
    let dot = g.to_dot(m.labels(), true);
    let declared: BTreeSet<(usize, usize)> = dot
        .lines()
        .filter(|l| l.contains("[label=") && !l.contains("->"))
        .map(|l| {
            let id = l.split_whitespace().next().unwrap();
            let (t, q) = id.trim_start_matches('n').split_once('_').unwrap();
            (t.parse().unwrap(), q.parse().unwrap())
        })
        .collect();
    assert_eq!(declared, reachable_nodes(&g));
    let edges = dot.lines().filter(|l| l.contains("->")).count();
    let expected: usize = reachable_nodes(&g)
        .iter()
        .filter(|(t, _)| t + 1 < g.horizon())
        .count()
        * g.num_observations();
    assert_eq!(edges, expected);
}

#[test]
fn particle_trajectory_matches_exact_on_deterministic_models() {
    for k in 0..10u64 {
        let m = models::random_deterministic_model(5, 3, 2, RngSeed(k));
        let mut base = SolveConfig::new(h(4), 2);
        base.seed = RngSeed(100 + k);
        base.value_epsilon = 0.0;
        base.max_iterations = 30;

        let mut exact = Vec::new();
        pgi_solve_observed(&m, &base, None, |rec| exact.push(rec.improved.clone())).unwrap();

        let mut pc = ParticleConfig::new(base.clone(), 1);
        pc.eval_rollouts = 1;
        let mut sampled = Vec::new();
        ppgi_solve_observed(&m, &pc, None, |_, g| sampled.push(g.clone())).unwrap();
        assert_eq!(exact, sampled, "model {k}");
    }
}

#[test]
fn particle_solver_on_single_state_model() {
    let m = models::constant_reward(3, 2, 1.5);
    let mut base = SolveConfig::new(h(5), 2);
    base.seed = RngSeed(2);
    let (g, report) = ppgi_solve(&m, &ParticleConfig::new(base, 20), None).unwrap();
    assert_eq!(report.iterations_run, 1);
    assert_eq!(report.final_value, 7.5);
    assert_eq!(
        exact_policy_value(&m, &m.initial_belief(), &g).unwrap(),
        7.5
    );
}

#[test]
fn tiger_particle_solver_reaches_exact_value() {
    let m = models::tiger();
    let mut base = SolveConfig::new(h(2), 2);
    base.max_iterations = 20;
    let best = (0..5u64)
        .map(|seed| {
            base.seed = RngSeed(seed);
            let (g, _) = ppgi_solve(&m, &ParticleConfig::new(base.clone(), 10_000), None).unwrap();
            mc_policy_value(&m, &g, 100_000, RngSeed(77)).mean
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((best + 2.0).abs() <= 0.3, "{best}");
}

#[test]
fn exact_solver_reaches_enumerated_optimum_on_tiger() {
    let m = models::tiger();
    for t in 1..=3 {
        let optimum = oracle::enumerate_optimum(&m, t);
        let best = (0..10u64)
            .map(|seed| {
                let mut cfg = SolveConfig::new(h(t), 2usize.pow(t as u32 - 1));
                cfg.seed = RngSeed(seed);
                pgi_solve(&m, &cfg, None).unwrap().1.final_value
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((best - optimum).abs() < 1e-9, "T={t}: {best} vs {optimum}");
    }
}

#[test]
fn compression_keeps_improvement_monotone_on_gridworld() {
    let m = models::gridworld();
    let mut cfg = SolveConfig::new(h(6), 3);
    cfg.compression = true;
    for seed in 0..5 {
        cfg.seed = RngSeed(seed);
        let mut values = Vec::new();
        pgi_solve_observed(&m, &cfg, None, |rec| {
            let exact = exact_policy_value(&m, &m.initial_belief(), rec.improved).unwrap();
            assert!((exact - rec.value).abs() < 1e-9);
            values.push(rec.value);
        })
        .unwrap();
        assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{values:?}");
    }
}
