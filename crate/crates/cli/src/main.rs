use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use uql_core::costsim::{monte_carlo_trial, run, RunConfig};
use uql_core::dtree::TreeDocument;
use uql_core::experiments::{run_experiment, ExperimentConfig, EXPERIMENT_IDS};
use uql_core::format::{FunctionSpec, InstanceFile};
use uql_core::instances::named_function;
use uql_core::oracle;
use uql_core::strategies::{AnalysisCache, StrategySpec};
use uql_core::{BooleanFunction, DecisionTree, Error, Instance};

#[derive(Parser)]
#[command(name = "uql", version, about = "Priced-query experiments on Boolean functions with unknown costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Influence, bias and expectation of a function.
    Analyze(AnalyzeArgs),
    /// Run a strategy on an instance and write one CSV row per trial.
    Simulate(SimulateArgs),
    /// Offline benchmark values from the exact dynamic programs.
    Benchmark(BenchmarkArgs),
    /// Run a catalogued experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Named function (`tribes:w=2`, `maj:n=5`, ...), inline JSON spec or spec file.
    #[arg(long, conflicts_with = "instance")]
    function: Option<String>,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Strategy string, e.g. `warmup-iprr:eps=0.1` or `iprr:eps=0.1,B=8`.
    #[arg(long)]
    strategy: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    budget: Option<f64>,
    /// Unit investment; defaults to 2^-10.
    #[arg(long, default_value_t = 1.0 / 1024.0)]
    beta: f64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate every input instead of sampling.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 10_000_000)]
    step_limit: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Error levels, repeated or comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    eps: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// One of the catalogued experiment ids.
    id: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// CSV path; the summary goes to the same path with `.summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Contract(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::PruningContract(_) | Error::TreeMismatch(_) => Failure::Contract(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_instance(path: &Path) -> CliResult<Instance> {
    let file: InstanceFile =
        serde_json::from_str(&read(path)?).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(Instance::from_file(&file)?)
}

fn load_function(arg: &str) -> CliResult<BooleanFunction> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else if Path::new(arg).is_file() {
        read(Path::new(arg))?
    } else {
        return Ok(named_function(arg)?);
    };
    if let Ok(file) = serde_json::from_str::<InstanceFile>(&text) {
        return Ok(file.function.build()?);
    }
    let spec: FunctionSpec = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("function spec: {e}")))?;
    Ok(spec.build()?)
}

#[derive(Serialize)]
struct Report {
    n: usize,
    influences: Vec<f64>,
    total_influence: f64,
    bias: f64,
    expectation: f64,
    approximate: bool,
}

fn analyze(args: AnalyzeArgs) -> CliResult<()> {
    let f = match (&args.function, &args.instance) {
        (Some(s), _) => load_function(s)?,
        (None, Some(p)) => load_instance(p)?.function,
        (None, None) => return Err(Failure::Config("pass --function or --instance".into())),
    };
    let a = f.analysis()?;
    let report = Report {
        n: f.arity(),
        total_influence: a.total_influence(),
        bias: a.bias(),
        expectation: a.expectation,
        approximate: a.approximate,
        influences: a.influences,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Config(e.to_string()))?;
    emit(args.out.as_deref(), &(text + "\n"))
}

#[derive(Serialize)]
struct SimRow {
    trial: u64,
    input: u64,
    output: Option<u8>,
    correct: bool,
    total_cost: f64,
    /// `coordinate:bit` pairs in reveal order, separated by `;`.
    reveals: String,
    status: &'static str,
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    if !(args.beta > 0.0 && args.beta.is_finite()) {
        return Err(Failure::Config(format!("beta must be positive, got {}", args.beta)));
    }
    if args.trials == 0 && !args.exact {
        return Err(Failure::Config("trials must be at least 1".into()));
    }
    let inst = load_instance(&args.instance)?;
    let mut spec = StrategySpec::parse(&args.strategy)?;
    spec.eps = args.eps.or(spec.eps);
    spec.budget = args.budget.or(spec.budget);
    let base_seed = spec.seed.unwrap_or(args.seed);
    let tree = match &spec.tree {
        Some(p) => {
            let doc: TreeDocument =
                serde_json::from_str(&read(Path::new(p))?).map_err(|e| Failure::Config(format!("{p}: {e}")))?;
            Some(DecisionTree::from_document(&doc)?)
        }
        None => None,
    };
    let (f, c) = (&inst.function, &inst.costs);
    let n = f.arity();
    let cache = AnalysisCache::with_seed(f.clone(), base_seed);
    let count = if args.exact {
        if n > uql_core::boolfn::ENUMERATION_CAP {
            return Err(Error::EnumerationCap { n, cap: uql_core::boolfn::ENUMERATION_CAP }.into());
        }
        if !spec.build(&cache, c, tree.as_ref(), 0)?.is_deterministic() {
            return Err(Failure::Config("--exact needs a deterministic strategy".into()));
        }
        1u64 << n
    } else {
        args.trials
    };
    let config = RunConfig { step_limit: args.step_limit, record_trajectory: false };
    let rows: Vec<SimRow> = (0..count)
        .into_par_iter()
        .map(|t| -> Result<SimRow, Error> {
            let (x, s) = if args.exact { (t, 0) } else { monte_carlo_trial(base_seed, t, n) };
            let mut strategy = spec.build(&cache, c, tree.as_ref(), s)?;
            match run(strategy.as_mut(), x, c, args.beta, &config) {
                Ok(r) => Ok(SimRow {
                    trial: t,
                    input: x,
                    output: Some(r.output as u8),
                    correct: r.output == f.eval_unchecked(x),
                    total_cost: r.total_cost,
                    reveals: r.reveal_order.iter().map(|(i, b)| format!("{i}:{}", *b as u8)).collect::<Vec<_>>().join(";"),
                    status: "ok",
                }),
                Err(Error::StepLimit(steps)) => Ok(SimRow {
                    trial: t,
                    input: x,
                    output: None,
                    correct: false,
                    total_cost: steps as f64 * args.beta,
                    reveals: String::new(),
                    status: "step_limit",
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, Error>>()?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Config(e.to_string()))?;
    emit(args.out.as_deref(), &String::from_utf8_lossy(&bytes))?;
    let m = rows.len() as f64;
    eprintln!(
        "trials={} mean_cost={} error={} step_limited={}",
        rows.len(),
        rows.iter().map(|r| r.total_cost).sum::<f64>() / m,
        rows.iter().filter(|r| !r.correct).count() as f64 / m,
        rows.iter().filter(|r| r.status != "ok").count()
    );
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> CliResult<()> {
    let inst = load_instance(&args.instance)?;
    let result = oracle::benchmark(&inst.function, &inst.costs, &args.eps)?;
    let text = serde_json::to_string_pretty(&result).map_err(|e| Failure::Config(e.to_string()))?;
    emit(args.out.as_deref(), &(text + "\n"))
}

fn experiment(args: ExperimentArgs) -> CliResult<()> {
    if !EXPERIMENT_IDS.contains(&args.id.as_str()) {
        return Err(Failure::Config(format!("unknown experiment {:?}; known: {}", args.id, EXPERIMENT_IDS.join(", "))));
    }
    let config = ExperimentConfig {
        id: args.id,
        seed: args.seed,
        trials: args.trials,
        cases: args.cases,
        beta: args.beta,
        eps: args.eps,
    };
    let out = run_experiment(&config)?;
    let summary = out.summary_json()? + "\n";
    match &args.out {
        Some(p) => {
            emit(Some(p), &out.csv)?;
            emit(Some(&p.with_extension("summary.json")), &summary)?;
        }
        None => {
            emit(None, &out.csv)?;
            eprint!("{summary}");
        }
    }
    if out.summary.violations > 0 {
        return Err(Failure::Contract(format!("{} contract violations", out.summary.violations)));
    }
    Ok(())
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("UQL_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Failure::Config(format!("UQL_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Failure::Config("UQL_THREADS must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Experiment(a) => experiment(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Contract(msg)) => {
            eprintln!("contract violation: {msg}");
            ExitCode::from(3)
        }
    }
}
