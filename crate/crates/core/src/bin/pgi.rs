use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pgi::bench::{self, BenchConfig};
use pgi::eval::{
    exact_policy_value, execute_policy, mc_policy_value, BeliefTracking, SimulatedEnvironment,
};
use pgi::exact::{pgi_solve, SolveConfig};
use pgi::format::{load_model, parse_pomdp_text, ModelSource};
use pgi::graph::{PolicyDocument, PolicyGraph};
use pgi::model::{Horizon, Labels, PomdpModel};
use pgi::models;
use pgi::particle::{ppgi_solve, ParticleConfig};
use pgi::rng::RngSeed;

/// Largest state count for which `eval` computes the exact value by default.
const EXACT_EVAL_MAX_STATES: usize = 5_000;

#[derive(Parser, Debug)]
#[command(
    name = "pgi",
    version,
    about = "Policy graph improvement for finite-horizon POMDPs"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a policy graph for a model.
    Solve(SolveArgs),
    /// Report the value of a policy.
    Eval(EvalArgs),
    /// Run a policy for one episode against a simulated environment.
    Exec(ExecArgs),
    /// Write a policy as a Graphviz DOT graph.
    Export(ExportArgs),
    /// Run the acceptance suite on bundled and random models.
    Bench(BenchArgs),
}

#[derive(clap::Args, Debug)]
struct SolveArgs {
    /// Model file (.pomdp text or native JSON) or a bundled name: tiger, chain, gridworld.
    #[arg(long)]
    model: String,
    #[arg(long, value_parser = parse_horizon)]
    horizon: Horizon,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    width: u64,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop once an iteration improves the value by less than this.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Merge redundant nodes and re-optimize the freed ones each iteration.
    #[arg(long)]
    compress: bool,
    /// Use the particle-based solver.
    #[arg(long)]
    particle: bool,
    #[arg(long, default_value_t = 1000)]
    n_particles: usize,
    /// Back-pass samples per node and action (default: --n-particles).
    #[arg(long)]
    n_samples: Option<usize>,
    /// Rollouts used to score each particle iteration.
    #[arg(long, default_value_t = 10_000)]
    eval_rollouts: usize,
    /// Start from this policy instead of a random one.
    #[arg(long)]
    initial_policy: Option<PathBuf>,
    #[arg(long)]
    policy_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    policy: PathBuf,
    /// Also estimate the value from this many rollouts.
    #[arg(long)]
    mc: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the exact evaluation.
    #[arg(long)]
    no_exact: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Track {
    None,
    Exact,
    Particle,
}

#[derive(clap::Args, Debug)]
struct ExecArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Belief to log alongside execution.
    #[arg(long, value_enum, default_value_t = Track::None)]
    track: Track,
    #[arg(long, default_value_t = 1000)]
    n_particles: usize,
    /// Trace destination (JSON lines); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    policy: PathBuf,
    /// Model whose names label actions and observations.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    reachable_only: bool,
    /// Destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct BenchArgs {
    /// Reduced instance counts.
    #[arg(long)]
    quick: bool,
    /// Base seed; repeat to sweep several.
    #[arg(long = "seed", default_values_t = [0u64])]
    seeds: Vec<u64>,
    /// Also write the results as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

fn parse_horizon(s: &str) -> Result<Horizon, String> {
    let t: usize = s.parse().map_err(|e| format!("{e}"))?;
    Horizon::new(t).ok_or_else(|| "horizon must be at least 1".to_string())
}

fn open_model(name_or_path: &str) -> Result<PomdpModel> {
    let path = Path::new(name_or_path);
    if !path.exists() {
        if let Some((name, text)) = models::BUNDLED.iter().find(|(n, _)| *n == name_or_path) {
            return Ok(parse_pomdp_text(&ModelSource::new(*text, *name))?);
        }
    }
    load_model(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn open_policy(path: &Path) -> Result<PolicyGraph> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read policy {}", path.display()))?;
    PolicyDocument::from_json(&text)
        .and_then(PolicyDocument::into_graph)
        .with_context(|| format!("invalid policy {}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let model = open_model(&args.model)?;
    let mut config = SolveConfig::new(args.horizon, args.width as usize);
    config.max_iterations = args.iterations;
    config.time_limit = args.time_limit.map(Duration::from_secs_f64);
    config.value_epsilon = args.epsilon;
    config.compression = args.compress;
    config.seed = RngSeed(args.seed);
    let initial = args
        .initial_policy
        .as_deref()
        .map(open_policy)
        .transpose()?;

    let (graph, report) = if args.particle {
        let mut pc = ParticleConfig::new(config, args.n_particles);
        pc.n_samples = args.n_samples;
        pc.eval_rollouts = args.eval_rollouts;
        ppgi_solve(&model, &pc, initial)?
    } else {
        pgi_solve(&model, &config, initial)?
    };

    if let Some(p) = &args.policy_out {
        write_out(
            Some(p),
            &PolicyDocument::new(&graph, Some(RngSeed(args.seed))).to_json(),
        )?;
    }
    if let Some(p) = &args.report_out {
        write_out(Some(p), &report.to_json())?;
    }
    let termination = serde_json::to_value(report.termination)?;
    println!(
        "value {} after {} iterations ({})",
        report.final_value,
        report.iterations_run,
        termination.as_str().unwrap_or_default()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = open_model(&args.model)?;
    let graph = open_policy(&args.policy)?;
    graph
        .check_model(&model)
        .context("policy does not fit the model")?;
    let exact = !args.no_exact && model.num_states() <= EXACT_EVAL_MAX_STATES;
    if exact {
        let v = exact_policy_value(&model, &model.initial_belief(), &graph)?;
        println!("exact {v}");
    }
    if let Some(n) = args.mc {
        if n == 0 {
            bail!("--mc needs at least one rollout");
        }
        let est = mc_policy_value(&model, &graph, n, RngSeed(args.seed));
        println!(
            "mc {} ± {} ({} rollouts, seed {})",
            est.mean, est.stderr, est.rollouts, args.seed
        );
    } else if !exact {
        bail!("model too large for exact evaluation; pass --mc N");
    }
    Ok(())
}

fn cmd_exec(args: ExecArgs) -> Result<()> {
    let model = open_model(&args.model)?;
    let graph = open_policy(&args.policy)?;
    graph
        .check_model(&model)
        .context("policy does not fit the model")?;
    let seed = RngSeed(args.seed);
    let mut env = SimulatedEnvironment::new(&model, seed.derive(&[0]));
    let tracking = match args.track {
        Track::None => BeliefTracking::None,
        Track::Exact => BeliefTracking::Exact(&model),
        Track::Particle => BeliefTracking::Particle {
            count: args.n_particles,
            seed: seed.derive(&[1]),
        },
    };
    let trace = execute_policy(&model, &graph, &mut env, tracking)?;
    write_out(args.out.as_deref(), &trace.to_json_lines())?;
    if let (Some(_), Some(total)) = (&args.out, trace.total_reward()) {
        println!("total reward {total}");
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let graph = open_policy(&args.policy)?;
    let labels = match &args.model {
        Some(name_or_path) => {
            let model = open_model(name_or_path)?;
            graph
                .check_model(&model)
                .context("policy does not fit the model")?;
            model.labels().clone()
        }
        None => Labels::default(),
    };
    write_out(
        args.out.as_deref(),
        &graph.to_dot(&labels, args.reachable_only),
    )
}

fn cmd_bench(args: BenchArgs) -> Result<bool> {
    let config = BenchConfig {
        quick: args.quick,
        seeds: args.seeds,
    };
    let results = bench::run(&config);
    for r in &results {
        println!("{r}");
    }
    if let Some(p) = &args.report_out {
        write_out(Some(p), &(serde_json::to_string_pretty(&results)? + "\n"))?;
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    Ok(passed == results.len())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    match cli.command {
        Command::Solve(a) => cmd_solve(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Exec(a) => cmd_exec(a).map(|_| true),
        Command::Export(a) => cmd_export(a).map(|_| true),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
