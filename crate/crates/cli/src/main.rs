mod manifest;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use treeshrink::benchmark::structure_grid;
use treeshrink::filtration::{ffs_init, kmeans_init, merge_prefixes, random_init, ScenarioMatrix};
use treeshrink::reduce::{reduce_tree, ReductionConfig, SolverKind, StartPlan};
use treeshrink::tree::{generate_random, load, ScenarioTree};
use treeshrink::{nested_distance, Error};

use manifest::RunManifest;

/// Scenario-tree reduction by nested-distance minimization.
#[derive(Parser, Debug)]
#[command(name = "treeshrink", version)]
struct Cli {
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "TREESHRINK_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Generate a full random tree.
    Gen(GenArgs),
    /// Build a fan tree from a CSV scenario file.
    Ingest(IngestArgs),
    /// Reduce a tree onto a smaller fixed structure.
    Reduce(ReduceArgs),
    /// Nested distance between two trees.
    Nd(NdArgs),
    /// Time the probability step over a grid of tree structures.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    /// Number of stages including the root.
    #[arg(long, default_value_t = 4)]
    stages: usize,
    #[arg(long, default_value_t = 6)]
    branching: usize,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Quantizer range `lo,hi`.
    #[arg(long, default_value = "-10,10", allow_hyphen_values = true)]
    range: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output tree; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    /// CSV with rows `prob, x_{0,1..d}, ..., x_{T,1..d}`.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Merge branches with identical values up to this stage.
    #[arg(long)]
    merge_stage: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum InitKind {
    Random,
    Kmeans,
    Ffs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StartPlanArg {
    Optimal,
    Uniform,
}

#[derive(Args, Debug, Serialize)]
struct ReduceArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Children per node of the random start, one value or one per stage.
    #[arg(long, default_value = "2")]
    target_branching: String,
    /// Starting tree; replaces `--init`.
    #[arg(long, conflicts_with = "init")]
    start: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InitKind::Random)]
    init: InitKind,
    /// Branches of the K-means or FFS fan; defaults to the number of leaves
    /// of the random start.
    #[arg(long)]
    scenarios: Option<usize>,
    /// Quantizer range `lo,hi` of the random start; defaults to the range of
    /// the input's quantizers.
    #[arg(long, allow_hyphen_values = true)]
    range: Option<String>,
    #[arg(long, default_value = "lp")]
    solver: String,
    #[arg(long, default_value_t = 0.1)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    /// MAM step size; derived from the costs when absent.
    #[arg(long)]
    rho: Option<f64>,
    /// IBP inverse temperature, relative to the largest cost of each problem.
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = StartPlanArg::Optimal)]
    start_plan: StartPlanArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Per-iteration CSV `iter,delta00,nd,seconds`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct NdArgs {
    #[arg(short = 'a', long)]
    first: PathBuf,
    #[arg(short = 'b', long)]
    second: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    order: f64,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    /// Subtrees under the root.
    #[arg(long, default_value = "2,8")]
    n: String,
    /// Leaves per subtree.
    #[arg(long, default_value = "10,200")]
    branch: String,
    #[arg(long, default_value = "lp,mam")]
    solvers: String,
    /// Outer iterations per run.
    #[arg(long, default_value_t = 3)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
enum Outcome {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
            eprintln!("error: cannot start {} workers: {e}", cli.workers);
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible | Error::Unbounded | Error::IterationLimit(_)) => 1,
        _ => 2,
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let clock = Instant::now();
    let mut manifest = RunManifest::new(&cli.command, cli.workers)?;
    let outcome = match &cli.command {
        Command::Gen(args) => gen(args, &mut manifest)?,
        Command::Ingest(args) => ingest(args, &mut manifest)?,
        Command::Reduce(args) => reduce(args, &mut manifest)?,
        Command::Nd(args) => nd(args, &mut manifest)?,
        Command::Bench(args) => bench(args, &mut manifest)?,
    };
    manifest.finish(clock.elapsed().as_secs_f64(), matches!(outcome, Outcome::Done))?;
    Ok(outcome)
}

fn parse_range(text: &str) -> anyhow::Result<(f64, f64)> {
    let (lo, hi) = text.split_once(',').with_context(|| format!("range '{text}' is not of the form lo,hi"))?;
    let lo: f64 = lo.trim().parse().with_context(|| format!("bad range bound '{lo}'"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("bad range bound '{hi}'"))?;
    if !(lo <= hi) {
        bail!(Error::Domain(format!("empty range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|e| anyhow::anyhow!(Error::Parse(format!("{what} '{x}': {e}")))))
        .collect()
}

fn load_tree(path: &Path) -> anyhow::Result<ScenarioTree> {
    load(path).with_context(|| format!("cannot load tree {}", path.display()))
}

fn gen(args: &GenArgs, manifest: &mut RunManifest) -> anyhow::Result<Outcome> {
    if args.stages < 2 {
        bail!(Error::Domain(format!("need at least 2 stages, got {}", args.stages)));
    }
    let (lo, hi) = parse_range(&args.range)?;
    let tree = generate_random(args.stages - 1, args.branching, args.dim, lo, hi, args.seed)?;
    manifest.seed = Some(args.seed);
    output::write_tree(&tree, args.output.as_deref(), manifest)?;
    Ok(Outcome::Done)
}

fn ingest(args: &IngestArgs, manifest: &mut RunManifest) -> anyhow::Result<Outcome> {
    let scenarios = ScenarioMatrix::load_csv(&args.input, args.dim)
        .with_context(|| format!("cannot read scenarios from {}", args.input.display()))?;
    manifest.inputs.push(args.input.clone());
    let mut tree = scenarios.fan_tree()?;
    if let Some(stage) = args.merge_stage {
        tree = merge_prefixes(&tree, stage)?;
    }
    output::write_tree(&tree, args.output.as_deref(), manifest)?;
    Ok(Outcome::Done)
}

fn quantizer_range(tree: &ScenarioTree) -> (f64, f64) {
    tree.quantizers().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn reduce(args: &ReduceArgs, manifest: &mut RunManifest) -> anyhow::Result<Outcome> {
    let original = load_tree(&args.input)?;
    manifest.inputs.push(args.input.clone());
    manifest.seed = Some(args.seed);
    let solver: SolverKind = args.solver.parse()?;
    if !(args.tol > 0.0) {
        bail!(Error::Domain(format!("tolerance must be positive, got {}", args.tol)));
    }

    let start = match &args.start {
        Some(path) => {
            manifest.inputs.push(path.clone());
            load_tree(path)?
        }
        None => {
            let depth = original.depth();
            let mut branching: Vec<usize> = parse_list(&args.target_branching, "branching")?;
            if branching.len() == 1 {
                branching = vec![branching[0]; depth];
            }
            if branching.len() != depth {
                bail!(Error::Dimension(format!("{} branching factors for a tree with {depth} periods", branching.len())));
            }
            let (lo, hi) = match &args.range {
                Some(r) => parse_range(r)?,
                None => quantizer_range(&original),
            };
            let leaves: usize = branching.iter().product();
            let k = args.scenarios.unwrap_or(leaves);
            match args.init {
                InitKind::Random => random_init(&branching, original.dim(), lo, hi, args.seed)?,
                InitKind::Kmeans => kmeans_init(&ScenarioMatrix::from_tree(&original)?, k, args.seed)?,
                InitKind::Ffs => ffs_init(&ScenarioMatrix::from_tree(&original)?, k, 2.0)?,
            }
        }
    };

    let mut config = ReductionConfig {
        solver,
        tol: args.tol,
        max_iter: args.max_iter,
        start: match args.start_plan {
            StartPlanArg::Optimal => StartPlan::Optimal,
            StartPlanArg::Uniform => StartPlan::Uniform,
        },
        seed: args.seed,
        ..Default::default()
    };
    config.mam.rho = args.rho;
    config.ibp.lambda = args.lambda;

    let (reduced, report) = reduce_tree(&original, &start, &config)?;
    for (stage, solver, count) in report.solver_summary() {
        eprintln!("stage {stage}: {solver} x{count}");
    }
    eprintln!(
        "nd {} -> {} in {} iterations{}",
        output::significant(report.initial_nd),
        output::significant(report.final_nd),
        report.iterations(),
        if report.converged { "" } else { " (not converged)" }
    );

    if let Some(path) = &args.trace {
        output::write_trace(&report, path)?;
        manifest.outputs.push(path.clone());
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?).with_context(|| format!("cannot write {}", path.display()))?;
        manifest.outputs.push(path.clone());
    }
    output::write_tree(&reduced, args.output.as_deref(), manifest)?;
    manifest.result = Some(serde_json::json!({
        "initial_nd": report.initial_nd,
        "final_nd": report.final_nd,
        "iterations": report.iterations(),
        "converged": report.converged,
    }));
    Ok(if report.converged { Outcome::Done } else { Outcome::NotConverged })
}

fn nd(args: &NdArgs, manifest: &mut RunManifest) -> anyhow::Result<Outcome> {
    let a = load_tree(&args.first)?;
    let b = load_tree(&args.second)?;
    manifest.inputs.extend([args.first.clone(), args.second.clone()]);
    let (distance, _) = nested_distance(&a, &b, args.order)?;
    println!("{}", output::significant(distance));
    manifest.result = Some(serde_json::json!({ "nd": distance }));
    Ok(Outcome::Done)
}

fn bench(args: &BenchArgs, manifest: &mut RunManifest) -> anyhow::Result<Outcome> {
    let n: Vec<usize> = parse_list(&args.n, "subtree count")?;
    let branch: Vec<usize> = parse_list(&args.branch, "branching")?;
    let solvers: Vec<SolverKind> = parse_list(&args.solvers, "solver")?;
    if n.iter().chain(&branch).any(|&x| x == 0) {
        bail!(Error::Domain("subtree counts and branchings must be positive".into()));
    }
    manifest.seed = Some(args.seed);
    let rows = structure_grid(&n, &branch, &solvers, &ReductionConfig::default(), args.iterations, args.seed)?;
    output::write_bench(&rows, args.output.as_deref(), manifest)?;
    Ok(Outcome::Done)
}
