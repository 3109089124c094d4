use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pgi::graph::{PolicyDocument, PolicyGraph};
use pgi::model::Horizon;

fn pgi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgi"))
        .args(args)
        .output()
        .unwrap()
}

fn tiger_path() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/tiger.pomdp").to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn solve_to(dir: &Path, horizon: &str, width: &str, seed: &str) -> (PathBuf, PathBuf, Output) {
    let policy = dir.join(format!("policy-{horizon}-{width}-{seed}.json"));
    let report = dir.join(format!("report-{horizon}-{width}-{seed}.json"));
    let out = pgi(&[
        "solve",
        "--model",
        &tiger_path(),
        "--horizon",
        horizon,
        "--width",
        width,
        "--seed",
        seed,
        "--policy-out",
        p(&policy),
        "--report-out",
        p(&report),
    ]);
    (policy, report, out)
}

#[test]
fn solve_horizon_one() {
    let out = pgi(&[
        "solve",
        "--model",
        &tiger_path(),
        "--horizon",
        "1",
        "--width",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("value -1 "), "{}", stdout(&out));
    assert!(stdout(&out).contains("(converged)"));
}

#[test]
fn solve_horizon_two_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, report, out) = solve_to(dir.path(), "2", "2", "7");
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("value -2 "));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["seed"], 7);
    assert_eq!(report["final_value"], -2.0);
    let values: Vec<f64> = report["iteration_values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0]));
    let doc = PolicyDocument::from_json(&std::fs::read_to_string(policy).unwrap()).unwrap();
    assert_eq!(doc.seed, Some(7));
}

#[test]
fn missing_model_names_the_path() {
    let out = pgi(&[
        "solve",
        "--model",
        "/no/such/dir/tiger.pomdp",
        "--horizon",
        "1",
        "--width",
        "1",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("/no/such/dir/tiger.pomdp"));
}

#[test]
fn parse_failure_is_positioned() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.pomdp");
    std::fs::write(
        &bad,
        "states: 2\nactions: 1\nobservations: 1\nT: 0 : 0 : 7 1.0\n",
    )
    .unwrap();
    let out = pgi(&[
        "solve",
        "--model",
        p(&bad),
        "--horizon",
        "1",
        "--width",
        "1",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains(":4:"), "{}", stderr(&out));
}

#[test]
fn invalid_dimensions_fail() {
    let out = pgi(&[
        "solve",
        "--model",
        "tiger",
        "--horizon",
        "0",
        "--width",
        "1",
    ]);
    assert!(!out.status.success());
    let out = pgi(&[
        "solve",
        "--model",
        "tiger",
        "--horizon",
        "2",
        "--width",
        "0",
    ]);
    assert!(!out.status.success());
}

#[test]
fn particle_solve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        let policy = dir.path().join(format!("p{threads}.json"));
        let report = dir.path().join(format!("r{threads}.json"));
        let out = pgi(&[
            "solve",
            "--model",
            "tiger",
            "--horizon",
            "3",
            "--width",
            "2",
            "--particle",
            "--n-particles",
            "300",
            "--eval-rollouts",
            "300",
            "--iterations",
            "5",
            "--seed",
            "4",
            "--threads",
            threads,
            "--policy-out",
            p(&policy),
            "--report-out",
            p(&report),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        (
            std::fs::read(policy).unwrap(),
            std::fs::read(report).unwrap(),
            out.stdout,
        )
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn eval_exact_and_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, _, _) = solve_to(dir.path(), "1", "1", "0");
    let out = pgi(&["eval", "--model", &tiger_path(), "--policy", p(&policy)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "exact -1");

    // A policy that opens a door at t=1, so rollouts have variance.
    let g = PolicyGraph::from_tables(2, 1, 3, 2, vec![0, 1], vec![0, 0]).unwrap();
    let mixed = dir.path().join("mixed.json");
    std::fs::write(&mixed, PolicyDocument::new(&g, None).to_json()).unwrap();
    let out = pgi(&[
        "eval",
        "--model",
        "tiger",
        "--policy",
        p(&mixed),
        "--mc",
        "100000",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let exact: f64 = text
        .lines()
        .next()
        .unwrap()
        .strip_prefix("exact ")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(exact, -46.0);
    let mc = text.lines().nth(1).unwrap();
    let mut parts = mc.strip_prefix("mc ").unwrap().split(" ± ");
    let mean: f64 = parts.next().unwrap().parse().unwrap();
    let stderr: f64 = parts
        .next()
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(stderr > 0.0);
    assert!((mean - exact).abs() <= 4.0 * stderr, "{mean} ± {stderr}");
}

#[test]
fn eval_rejects_wrong_observation_count() {
    let dir = tempfile::tempdir().unwrap();
    let g = PolicyGraph::uniform(Horizon::new(2).unwrap(), 1, 3, 3, 0).unwrap();
    let policy = dir.path().join("wrong.json");
    std::fs::write(&policy, PolicyDocument::new(&g, None).to_json()).unwrap();
    let out = pgi(&["eval", "--model", "tiger", "--policy", p(&policy)]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("does not fit"), "{}", stderr(&out));
}

#[test]
fn export_counts_and_pruning() {
    let dir = tempfile::tempdir().unwrap();
    let g = PolicyGraph::uniform(Horizon::new(2).unwrap(), 1, 3, 2, 0).unwrap();
    let policy = dir.path().join("w1.json");
    std::fs::write(&policy, PolicyDocument::new(&g, None).to_json()).unwrap();
    let out = pgi(&["export", "--policy", p(&policy), "--model", "tiger"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dot = stdout(&out);
    assert_eq!(
        dot.lines()
            .filter(|l| l.contains("[label=") && !l.contains("->"))
            .count(),
        2
    );
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 2);
    assert!(dot.contains("hear-left"));

    // Node (1, 1) is never targeted.
    let g = PolicyGraph::from_tables(2, 2, 3, 2, vec![0, 0, 1, 2], vec![0, 0, 0, 0]).unwrap();
    let dead = dir.path().join("dead.json");
    std::fs::write(&dead, PolicyDocument::new(&g, None).to_json()).unwrap();
    let full = stdout(&pgi(&["export", "--policy", p(&dead)]));
    assert!(full.contains("n1_1 "));
    let out_file = dir.path().join("pruned.dot");
    let out = pgi(&[
        "export",
        "--policy",
        p(&dead),
        "--reachable-only",
        "--out",
        p(&out_file),
    ]);
    assert!(out.status.success());
    assert!(!std::fs::read_to_string(out_file).unwrap().contains("n1_1"));

    let out = pgi(&[
        "export",
        "--policy",
        p(&dead),
        "--out",
        "/no/such/dir/graph.dot",
    ]);
    assert!(!out.status.success());
}

#[test]
fn exec_writes_trace_lines() {
    let dir = tempfile::tempdir().unwrap();
    let g = PolicyGraph::uniform(Horizon::new(4).unwrap(), 2, 3, 2, 0).unwrap();
    let policy = dir.path().join("listen.json");
    std::fs::write(&policy, PolicyDocument::new(&g, None).to_json()).unwrap();
    for track in ["none", "exact", "particle"] {
        let trace = dir.path().join(format!("{track}.jsonl"));
        let out = pgi(&[
            "exec",
            "--model",
            "tiger",
            "--policy",
            p(&policy),
            "--track",
            track,
            "--seed",
            "1",
            "--n-particles",
            "50",
            "--out",
            p(&trace),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert_eq!(stdout(&out).trim(), "total reward -4");
        let lines: Vec<serde_json::Value> = std::fs::read_to_string(&trace)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l["reward"] == -1.0));
        assert_eq!(lines[0].get("belief").is_some(), track != "none");
    }
}

#[test]
fn bench_quick_passes() {
    let out = pgi(&["bench", "--quick", "--seed", "3", "--seed", "4"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 9);
    assert!(text.contains("9/9 criteria passed"));
}
