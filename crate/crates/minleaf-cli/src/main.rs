//! Command-line front end for the worst-leaf tree toolkit.
//!
//! Subcommands: `train`, `extend`, `eval`, `export-lp`, `check`,
//! `export-dot`. A TOML config file (`--config`) supplies defaults for any
//! omitted flag; explicit flags always win. Exit codes: 0 on success, 1 on
//! domain errors (infeasible inputs, parse failures inside files, solver
//! errors), 2 on usage errors (bad invocation or unreadable paths).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use minleaf::boost::extend_tree;
use minleaf::cart::{cart_train, CartConfig};
use minleaf::data::{compute_epsilon, load_csv, Dataset, Encoding};
use minleaf::eval::{emit_report, run_experiment, ExperimentConfig, Method};
use minleaf::mio::{
    build_mio, check_feasible, emit_lp, extract_tree, load_solution, warmstart_from_tree,
    FeasTolerances, Objective,
};
use minleaf::search::{solve, SearchConfig, Strategy};
use minleaf::tree::{export_dot, leaf_accuracy, model_accuracy, reduce_tree, ShallowTree};
use minleaf::{Error, Result};

#[derive(Parser)]
#[command(
    name = "minleaf",
    version,
    about = "Shallow decision trees that maximize worst-leaf accuracy"
)]
struct Cli {
    /// TOML file supplying defaults for omitted flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for search and evaluation pools.
    #[arg(long, global = true, env = "MINLEAF_JOBS", value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a shallow tree and write tree JSON, DOT, and metrics.
    Train(TrainArgs),
    /// Extend a saved tree with per-leaf boosted models.
    Extend(ExtendArgs),
    /// Evaluate methods over seeded train/test splits of datasets.
    Eval(EvalArgs),
    /// Export the optimization model in LP format plus a warmstart file.
    ExportLp(ExportLpArgs),
    /// Verify a solution file against a rebuilt model.
    Check(CheckArgs),
    /// Render a saved tree as Graphviz DOT with per-leaf statistics.
    ExportDot(ExportDotArgs),
}

/// Flags shared by every command that loads a dataset.
#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Label column name.
    #[arg(long, value_name = "COLUMN")]
    label: Option<String>,
    /// Categorical feature encoding: ordinal or one_hot.
    #[arg(long, value_name = "KIND")]
    encoding: Option<String>,
}

/// Flags shared by every command that builds a model or search.
#[derive(Args)]
struct ModelArgs {
    /// Tree depth limit.
    #[arg(long)]
    depth: Option<usize>,
    /// Minimum samples per non-empty leaf.
    #[arg(long = "nmin", value_name = "N")]
    n_min: Option<usize>,
    /// Training objective: leaf_accuracy or misclassification.
    #[arg(long)]
    objective: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Trainer: cart or exact.
    #[arg(long)]
    method: Option<String>,
    /// Search strategy for the exact trainer: direct, warmstarted, gradual.
    #[arg(long)]
    strategy: Option<String>,
    /// Search budget in seconds.
    #[arg(long, value_name = "SECS")]
    budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for tree.json, tree.dot, metrics.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtendArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Saved shallow tree JSON.
    #[arg(long, value_name = "PATH")]
    tree: PathBuf,
    /// Random-search iterations per extended leaf.
    #[arg(long)]
    iterations: Option<usize>,
    /// Cross-validation folds per extended leaf.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for hybrid.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset CSVs; each is named by its file stem.
    #[arg(long, value_name = "PATH", required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Label column name.
    #[arg(long, value_name = "COLUMN")]
    label: Option<String>,
    /// Categorical feature encoding: ordinal or one_hot.
    #[arg(long, value_name = "KIND")]
    encoding: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated subset of cart, exact, hybrid-cart, hybrid-exact.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Comma-separated split seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Search strategy for exact methods.
    #[arg(long)]
    strategy: Option<String>,
    /// Search budget in seconds per exact run.
    #[arg(long, value_name = "SECS")]
    budget: Option<f64>,
    /// Random-search iterations per extended leaf.
    #[arg(long)]
    iterations: Option<usize>,
    /// Cross-validation folds per extended leaf.
    #[arg(long)]
    folds: Option<usize>,
    /// Output directory for raw.csv, aggregate.csv, summary.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportLpArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Tree depth of the model (required: it fixes the variable layout).
    #[arg(long, required = true)]
    depth: usize,
    /// Minimum samples per non-empty leaf.
    #[arg(long = "nmin", value_name = "N")]
    n_min: Option<usize>,
    /// Training objective: leaf_accuracy or misclassification.
    #[arg(long)]
    objective: Option<String>,
    /// Output directory for model.lp and warmstart.sol.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Tree depth of the model the solution refers to.
    #[arg(long, required = true)]
    depth: usize,
    /// Minimum samples per non-empty leaf.
    #[arg(long = "nmin", value_name = "N")]
    n_min: Option<usize>,
    /// Training objective: leaf_accuracy or misclassification.
    #[arg(long)]
    objective: Option<String>,
    /// Solver solution file (name value pairs).
    #[arg(long, value_name = "PATH")]
    solution: PathBuf,
}

#[derive(Args)]
struct ExportDotArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Saved shallow tree JSON.
    #[arg(long, value_name = "PATH")]
    tree: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Defaults read from `--config`; every field is optional and loses to an
/// explicit flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    depth: Option<usize>,
    n_min: Option<usize>,
    objective: Option<String>,
    strategy: Option<String>,
    method: Option<String>,
    methods: Option<Vec<String>>,
    budget_secs: Option<f64>,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    label: Option<String>,
    encoding: Option<String>,
    iterations: Option<usize>,
    folds: Option<usize>,
    out: Option<PathBuf>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("config {}: {e}", path.display()))
        })
    }
}

/// Fully merged settings: flag, else config file, else built-in default.
struct RunConfig {
    depth: usize,
    n_min: usize,
    objective: Objective,
    strategy: Strategy,
    budget_secs: f64,
    seed: u64,
    seeds: Vec<u64>,
    label: String,
    encoding: Encoding,
    iterations: usize,
    folds: usize,
    out: PathBuf,
}

fn parse_from<T: FromStr<Err = Error>>(value: Option<&str>) -> Result<Option<T>> {
    value.map(T::from_str).transpose()
}

impl RunConfig {
    fn merge(file: &FileConfig, model: Option<&ModelArgs>) -> Result<Self> {
        let flag_objective = model.and_then(|m| m.objective.as_deref());
        Ok(RunConfig {
            depth: model.and_then(|m| m.depth).or(file.depth).unwrap_or(4),
            n_min: model.and_then(|m| m.n_min).or(file.n_min).unwrap_or(50),
            objective: parse_from(flag_objective)?
                .or(parse_from(file.objective.as_deref())?)
                .unwrap_or(Objective::LeafAccuracy),
            strategy: parse_from(file.strategy.as_deref())?.unwrap_or(Strategy::Warmstarted),
            budget_secs: file.budget_secs.unwrap_or(60.0),
            seed: file.seed.unwrap_or(0),
            seeds: file.seeds.clone().unwrap_or_else(|| (0..10).collect()),
            label: file.label.clone().unwrap_or_else(|| "label".to_string()),
            encoding: parse_from(file.encoding.as_deref())?.unwrap_or(Encoding::Ordinal),
            iterations: file.iterations.unwrap_or(50),
            folds: file.folds.unwrap_or(3),
            out: file.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    fn search_config(&self) -> SearchConfig {
        SearchConfig {
            depth: self.depth,
            n_min: self.n_min,
            objective: self.objective,
            strategy: self.strategy,
            time_budget: Duration::from_secs_f64(self.budget_secs),
            seed: self.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // A failure here means a pool already exists; that is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Train(args) => cmd_train(args, &file),
        Command::Extend(args) => cmd_extend(args, &file),
        Command::Eval(args) => cmd_eval(args, &file),
        Command::ExportLp(args) => cmd_export_lp(args, &file),
        Command::Check(args) => cmd_check(args, &file),
        Command::ExportDot(args) => cmd_export_dot(args, &file),
    }
}

fn load_data(args: &DataArgs, run: &RunConfig) -> Result<Dataset> {
    let label = args.label.as_deref().unwrap_or(&run.label);
    let encoding = parse_from::<Encoding>(args.encoding.as_deref())?.unwrap_or(run.encoding);
    load_csv(&args.data, label, encoding)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_train(args: &TrainArgs, file: &FileConfig) -> Result<()> {
    let mut run = RunConfig::merge(file, Some(&args.model))?;
    if let Some(strategy) = parse_from::<Strategy>(args.strategy.as_deref())? {
        run.strategy = strategy;
    }
    run.budget_secs = args.budget.unwrap_or(run.budget_secs);
    run.seed = args.seed.unwrap_or(run.seed);
    run.out = args.out.clone().unwrap_or(run.out);
    let method = args
        .method
        .as_deref()
        .or(file.method.as_deref())
        .unwrap_or("exact");

    let ds = load_data(&args.data, &run)?;
    let start = Instant::now();
    let (tree, proven_optimal) = match method {
        "cart" => (
            cart_train(&ds, &CartConfig::at(run.depth, run.n_min))?,
            false,
        ),
        "exact" => {
            let result = solve(&ds, &run.search_config(), None)?;
            (result.tree, result.proven_optimal)
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown method '{other}' (expected cart or exact)"
            )))
        }
    };
    let leaves_before = tree.leaf_count();
    let reduced = reduce_tree(&tree, &ds);
    let elapsed = start.elapsed().as_secs_f64();

    let (leaf_acc, stats) = leaf_accuracy(&reduced, &ds);
    let model_acc = stats.model_accuracy();
    let objective_value = match run.objective {
        Objective::LeafAccuracy => leaf_acc,
        Objective::Misclassification => {
            stats.per_leaf.iter().map(|s| s.correct).sum::<usize>() as f64
        }
    };

    write_text(&run.out.join("tree.json"), &reduced.to_json())?;
    write_text(
        &run.out.join("tree.dot"),
        &export_dot(
            &reduced,
            ds.feature_names(),
            ds.class_names(),
            &stats,
            None,
        ),
    )?;
    let metrics = serde_json::json!({
        "method": method,
        "depth": run.depth,
        "n_min": run.n_min,
        "objective": run.objective.to_string(),
        "strategy": run.strategy.to_string(),
        "budget_secs": run.budget_secs,
        "seed": run.seed,
        "leaf_accuracy": leaf_acc,
        "model_accuracy": model_acc,
        "objective_value": objective_value,
        "leaves_before": leaves_before,
        "leaves_after": reduced.leaf_count(),
        "proven_optimal": proven_optimal,
        "elapsed_secs": elapsed,
    });
    write_text(
        &run.out.join("metrics.json"),
        &serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
    )?;

    println!("leaf accuracy {leaf_acc}");
    println!("model accuracy {model_acc}");
    println!("artifacts written to {}", run.out.display());
    Ok(())
}

fn cmd_extend(args: &ExtendArgs, file: &FileConfig) -> Result<()> {
    let mut run = RunConfig::merge(file, None)?;
    run.iterations = args.iterations.unwrap_or(run.iterations);
    run.folds = args.folds.unwrap_or(run.folds);
    run.seed = args.seed.unwrap_or(run.seed);
    run.out = args.out.clone().unwrap_or(run.out);

    let ds = load_data(&args.data, &run)?;
    let text = std::fs::read_to_string(&args.tree).map_err(|source| Error::Io {
        path: args.tree.clone(),
        source,
    })?;
    let tree = ShallowTree::from_json(&text)?;
    let hybrid = extend_tree(&tree, &ds, run.iterations, run.folds, run.seed)?;

    write_text(&run.out.join("hybrid.json"), &hybrid.to_json())?;
    println!("shallow accuracy {}", model_accuracy(&tree, &ds));
    println!("hybrid accuracy {}", model_accuracy(&hybrid, &ds));
    println!(
        "agreement rate {}",
        minleaf::boost::agreement_rate(&hybrid, &ds)
    );
    println!("hybrid written to {}", run.out.join("hybrid.json").display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs, file: &FileConfig) -> Result<()> {
    let mut run = RunConfig::merge(file, Some(&args.model))?;
    if let Some(strategy) = parse_from::<Strategy>(args.strategy.as_deref())? {
        run.strategy = strategy;
    }
    run.budget_secs = args.budget.unwrap_or(run.budget_secs);
    run.iterations = args.iterations.unwrap_or(run.iterations);
    run.folds = args.folds.unwrap_or(run.folds);
    run.out = args.out.clone().unwrap_or(run.out);
    if !args.seeds.is_empty() {
        run.seeds = args.seeds.clone();
    }

    let method_names: Vec<String> = if !args.methods.is_empty() {
        args.methods.clone()
    } else if let Some(names) = &file.methods {
        names.clone()
    } else {
        vec!["cart".to_string(), "exact".to_string()]
    };
    let methods: Vec<Method> = method_names
        .iter()
        .map(|name| name.parse())
        .collect::<Result<_>>()?;

    let label = args.label.as_deref().unwrap_or(&run.label);
    let encoding = parse_from::<Encoding>(args.encoding.as_deref())?.unwrap_or(run.encoding);
    let mut datasets = Vec::with_capacity(args.data.len());
    for path in &args.data {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        datasets.push((name, load_csv(path, label, encoding)?));
    }

    let cfg = ExperimentConfig {
        depth: run.depth,
        n_min: run.n_min,
        objective: run.objective,
        strategy: run.strategy,
        time_budget_secs: run.budget_secs,
        extend_iterations: run.iterations,
        cv_folds: run.folds,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&datasets, &methods, &run.seeds, &cfg)?;
    let paths = emit_report(&report, &run.out)?;
    for path in &paths {
        println!("wrote {}", path.display());
    }
    for (method, rank) in report.mean_ranks() {
        println!("mean rank {method}: {rank}");
    }
    if report.partial {
        eprintln!(
            "warning: {} runs failed; report is partial",
            report.failures.len()
        );
    }
    Ok(())
}

fn cmd_export_lp(args: &ExportLpArgs, file: &FileConfig) -> Result<()> {
    let model_args = ModelArgs {
        depth: Some(args.depth),
        n_min: args.n_min,
        objective: args.objective.clone(),
    };
    let mut run = RunConfig::merge(file, Some(&model_args))?;
    run.out = args.out.clone().unwrap_or(run.out);

    let ds = load_data(&args.data, &run)?;
    let eps = compute_epsilon(&ds);
    let model = build_mio(&ds, &eps, run.depth, run.n_min, run.objective)?;
    write_text(&run.out.join("model.lp"), &emit_lp(&model))?;

    let cart = cart_train(&ds, &CartConfig::at(run.depth, run.n_min))?;
    let warmstart = warmstart_from_tree(&model, &reduce_tree(&cart, &ds), &ds)?;
    let report = check_feasible(&model, &warmstart, FeasTolerances::default())?;
    write_text(
        &run.out.join("warmstart.sol"),
        &warmstart.to_solution_text(Some(&format!(
            "greedy warmstart, objective {}",
            report.objective
        ))),
    )?;

    println!("wrote {}", run.out.join("model.lp").display());
    println!("wrote {}", run.out.join("warmstart.sol").display());
    println!("warmstart objective {}", report.objective);
    Ok(())
}

fn cmd_check(args: &CheckArgs, file: &FileConfig) -> Result<()> {
    let model_args = ModelArgs {
        depth: Some(args.depth),
        n_min: args.n_min,
        objective: args.objective.clone(),
    };
    let run = RunConfig::merge(file, Some(&model_args))?;

    let ds = load_data(&args.data, &run)?;
    let eps = compute_epsilon(&ds);
    let model = build_mio(&ds, &eps, run.depth, run.n_min, run.objective)?;
    let assignment = load_solution(&args.solution)?;
    let report = check_feasible(&model, &assignment, FeasTolerances::default())?;

    if report.feasible {
        println!("feasible, objective {}", report.objective);
    } else {
        println!(
            "infeasible ({} violations), objective {}",
            report.violations.len(),
            report.objective
        );
        for violation in &report.violations {
            println!("  {} off by {}", violation.id, violation.amount);
        }
    }
    let tree = reduce_tree(&extract_tree(&model, &assignment)?, &ds);
    println!("extracted tree:");
    println!("{}", tree.to_json());
    Ok(())
}

fn cmd_export_dot(args: &ExportDotArgs, file: &FileConfig) -> Result<()> {
    let run = RunConfig::merge(file, None)?;
    let ds = load_data(&args.data, &run)?;
    let text = std::fs::read_to_string(&args.tree).map_err(|source| Error::Io {
        path: args.tree.clone(),
        source,
    })?;
    let tree = ShallowTree::from_json(&text)?;
    let (_, stats) = leaf_accuracy(&tree, &ds);
    let dot = export_dot(&tree, ds.feature_names(), ds.class_names(), &stats, None);
    match &args.out {
        Some(path) => {
            write_text(path, &dot)?;
            println!("wrote {}", path.display());
        }
        None => print!("{dot}"),
    }
    Ok(())
}
