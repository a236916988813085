//! Experiment harness: trains each requested method on multiple seeded
//! train/test splits of each dataset, evaluates the reduced (deployed) tree
//! on the held-out data, aggregates means, standard deviations, and
//! per-dataset ranks, and compares methods pairwise with the sign test and
//! the Wilcoxon signed-rank test.
//!
//! Exact methods are warmstarted from the reduced CART tree. Per-run
//! failures are recorded in the report and the run continues; a report with
//! any failure is flagged partial. Raw rows are fully deterministic for a
//! fixed input (wall times are reported only in the JSON summary, so the
//! raw and aggregate CSVs are byte-identical across reruns whenever the
//! search completes within its budget).

pub mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{agreement_rate, extend_tree, HybridTree};
use crate::cart::{cart_train, CartConfig};
use crate::data::{split_dataset, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::mio::Objective;
use crate::search::{solve, SearchConfig, Strategy};
use crate::tree::{leaf_accuracy, model_accuracy, reduce_tree, ShallowTree};
use stats::{sign_test, wilcoxon_signed_rank};

/// A trainable method in the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Greedy tree with cost-complexity pruning.
    Cart,
    /// Exact leaf-accuracy search, warmstarted from CART.
    Exact,
    /// CART tree with boosted leaf extensions.
    HybridCart,
    /// Exact tree with boosted leaf extensions.
    HybridExact,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Cart,
        Method::Exact,
        Method::HybridCart,
        Method::HybridExact,
    ];

    fn needs_exact(self) -> bool {
        matches!(self, Method::Exact | Method::HybridExact)
    }

    fn is_hybrid(self) -> bool {
        matches!(self, Method::HybridCart | Method::HybridExact)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Method::Cart => "cart",
            Method::Exact => "exact",
            Method::HybridCart => "hybrid-cart",
            Method::HybridExact => "hybrid-exact",
        };
        f.write_str(name)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cart" => Ok(Method::Cart),
            "exact" => Ok(Method::Exact),
            "hybrid-cart" => Ok(Method::HybridCart),
            "hybrid-exact" => Ok(Method::HybridExact),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}' (expected cart, exact, hybrid-cart, or hybrid-exact)"
            ))),
        }
    }
}

/// Shared settings for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub depth: usize,
    pub n_min: usize,
    pub objective: Objective,
    pub strategy: Strategy,
    pub time_budget_secs: f64,
    /// Random-search iterations per extended leaf.
    pub extend_iterations: usize,
    pub cv_folds: usize,
    pub train_fraction: f64,
    /// Upper bound on training rows per split.
    pub train_cap: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            depth: 4,
            n_min: 50,
            objective: Objective::LeafAccuracy,
            strategy: Strategy::Warmstarted,
            time_budget_secs: 60.0,
            extend_iterations: 50,
            cv_folds: 3,
            train_fraction: 0.8,
            train_cap: Some(10_000),
        }
    }
}

impl ExperimentConfig {
    fn search_config(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            depth: self.depth,
            n_min: self.n_min,
            objective: self.objective,
            strategy: self.strategy,
            time_budget: Duration::from_secs_f64(self.time_budget_secs),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.search_config(0).validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction {} is outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.extend_iterations < 1 || self.cv_folds < 2 {
            return Err(Error::InvalidConfig(
                "extension needs at least 1 iteration and 2 folds".into(),
            ));
        }
        Ok(())
    }
}

/// One (dataset, seed, method) result over the held-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub dataset: String,
    pub seed: u64,
    pub method: Method,
    pub train_leaf_accuracy: f64,
    pub test_leaf_accuracy: f64,
    pub train_model_accuracy: f64,
    pub test_model_accuracy: f64,
    pub hybrid_train_accuracy: Option<f64>,
    pub hybrid_test_accuracy: Option<f64>,
    /// Fraction of test samples where hybrid and shallow predictions agree.
    pub agreement_rate: Option<f64>,
    pub leaves_before: usize,
    pub leaves_after: usize,
    /// Training objective of the reduced tree under the configured
    /// objective: leaf accuracy, or the count of correct samples.
    pub objective_value: f64,
    pub proven_optimal: bool,
    /// End-to-end time to produce this method's artifact, including shared
    /// prerequisites (CART for warmstarts, the exact tree for its hybrid).
    pub wall_time_secs: f64,
}

/// A recorded per-run failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub dataset: String,
    pub seed: u64,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub rows: Vec<EvalRow>,
    pub failures: Vec<RunFailure>,
    /// True when any run failed.
    pub partial: bool,
}

/// Per (dataset, method) aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub method: Method,
    pub runs: usize,
    pub train_leaf_mean: f64,
    pub train_leaf_std: f64,
    pub test_leaf_mean: f64,
    pub test_leaf_std: f64,
    pub train_model_mean: f64,
    pub train_model_std: f64,
    pub test_model_mean: f64,
    pub test_model_std: f64,
    pub hybrid_train_mean: Option<f64>,
    pub hybrid_test_mean: Option<f64>,
    pub agreement_mean: Option<f64>,
    pub leaves_after_mean: f64,
    pub objective_mean: f64,
    pub proven_optimal_rate: f64,
    /// Rank of `test_leaf_mean` among this dataset's methods (1 = best,
    /// ties averaged).
    pub test_leaf_rank: f64,
}

/// Paired comparison of two methods over per-dataset mean test leaf
/// accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub method_a: Method,
    pub method_b: Method,
    pub datasets: usize,
    pub wins_a: usize,
    pub losses_a: usize,
    pub ties: usize,
    /// Mean over datasets of (mean_a - mean_b) on test leaf accuracy.
    pub mean_test_leaf_diff: f64,
    pub sign_p: f64,
    pub wilcoxon_w: Option<f64>,
    /// None when every per-dataset difference is zero.
    pub wilcoxon_p: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Ranks with ties averaged; rank 1 goes to the largest value.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut ranks = vec![0.0; values.len()];
    let mut lo = 0;
    while lo < values.len() {
        let mut hi = lo;
        while hi + 1 < values.len() && values[order[hi + 1]] == values[order[lo]] {
            hi += 1;
        }
        let shared = (lo + 1 + hi + 1) as f64 / 2.0;
        for &idx in &order[lo..=hi] {
            ranks[idx] = shared;
        }
        lo = hi + 1;
    }
    ranks
}

impl EvalReport {
    /// Per (dataset, method) means, standard deviations, and ranks,
    /// sorted by (dataset, method).
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut groups: BTreeMap<(String, Method), Vec<&EvalRow>> = BTreeMap::new();
        for row in &self.rows {
            groups
                .entry((row.dataset.clone(), row.method))
                .or_default()
                .push(row);
        }
        let mut aggregates: Vec<AggregateRow> = groups
            .iter()
            .map(|((dataset, method), rows)| {
                let col = |f: fn(&EvalRow) -> f64| -> Vec<f64> {
                    rows.iter().map(|r| f(r)).collect()
                };
                let opt_col = |f: fn(&EvalRow) -> Option<f64>| -> Option<f64> {
                    let values: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                    (!values.is_empty()).then(|| mean(&values))
                };
                let train_leaf = col(|r| r.train_leaf_accuracy);
                let test_leaf = col(|r| r.test_leaf_accuracy);
                let train_model = col(|r| r.train_model_accuracy);
                let test_model = col(|r| r.test_model_accuracy);
                AggregateRow {
                    dataset: dataset.clone(),
                    method: *method,
                    runs: rows.len(),
                    train_leaf_mean: mean(&train_leaf),
                    train_leaf_std: std_dev(&train_leaf),
                    test_leaf_mean: mean(&test_leaf),
                    test_leaf_std: std_dev(&test_leaf),
                    train_model_mean: mean(&train_model),
                    train_model_std: std_dev(&train_model),
                    test_model_mean: mean(&test_model),
                    test_model_std: std_dev(&test_model),
                    hybrid_train_mean: opt_col(|r| r.hybrid_train_accuracy),
                    hybrid_test_mean: opt_col(|r| r.hybrid_test_accuracy),
                    agreement_mean: opt_col(|r| r.agreement_rate),
                    leaves_after_mean: mean(&col(|r| r.leaves_after as f64)),
                    objective_mean: mean(&col(|r| r.objective_value)),
                    proven_optimal_rate: mean(&col(|r| r.proven_optimal as u8 as f64)),
                    test_leaf_rank: 0.0,
                }
            })
            .collect();

        // Rank methods within each dataset by mean test leaf accuracy.
        let mut start = 0;
        while start < aggregates.len() {
            let mut end = start;
            while end + 1 < aggregates.len()
                && aggregates[end + 1].dataset == aggregates[start].dataset
            {
                end += 1;
            }
            let values: Vec<f64> = aggregates[start..=end]
                .iter()
                .map(|a| a.test_leaf_mean)
                .collect();
            for (offset, rank) in average_ranks(&values).into_iter().enumerate() {
                aggregates[start + offset].test_leaf_rank = rank;
            }
            start = end + 1;
        }
        aggregates
    }

    /// Mean per-dataset rank of each method present in the report.
    pub fn mean_ranks(&self) -> BTreeMap<Method, f64> {
        let mut sums: BTreeMap<Method, (f64, usize)> = BTreeMap::new();
        for row in self.aggregate() {
            let entry = sums.entry(row.method).or_insert((0.0, 0));
            entry.0 += row.test_leaf_rank;
            entry.1 += 1;
        }
        sums.into_iter()
            .map(|(m, (sum, count))| (m, sum / count as f64))
            .collect()
    }

    /// All pairwise method comparisons over per-dataset mean test leaf
    /// accuracies.
    pub fn comparisons(&self) -> Vec<MethodComparison> {
        let aggregates = self.aggregate();
        let mut methods: Vec<Method> = aggregates.iter().map(|a| a.method).collect();
        methods.sort();
        methods.dedup();
        let by_key: BTreeMap<(String, Method), f64> = aggregates
            .iter()
            .map(|a| ((a.dataset.clone(), a.method), a.test_leaf_mean))
            .collect();
        let mut datasets: Vec<String> = aggregates.iter().map(|a| a.dataset.clone()).collect();
        datasets.sort();
        datasets.dedup();

        let mut out = Vec::new();
        for (i, &a) in methods.iter().enumerate() {
            for &b in &methods[i + 1..] {
                let diffs: Vec<f64> = datasets
                    .iter()
                    .filter_map(|d| {
                        let va = by_key.get(&(d.clone(), a))?;
                        let vb = by_key.get(&(d.clone(), b))?;
                        Some(va - vb)
                    })
                    .collect();
                if diffs.is_empty() {
                    continue;
                }
                let wins = diffs.iter().filter(|d| **d > 0.0).count();
                let losses = diffs.iter().filter(|d| **d < 0.0).count();
                let ties = diffs.len() - wins - losses;
                let wilcoxon = wilcoxon_signed_rank(&diffs).ok();
                out.push(MethodComparison {
                    method_a: a,
                    method_b: b,
                    datasets: diffs.len(),
                    wins_a: wins,
                    losses_a: losses,
                    ties,
                    mean_test_leaf_diff: mean(&diffs),
                    sign_p: sign_test(wins as u64, losses as u64),
                    wilcoxon_w: wilcoxon.map(|r| r.w),
                    wilcoxon_p: wilcoxon.map(|r| r.p_value),
                });
            }
        }
        out
    }
}

/// Everything one split needs at most once, shared across methods.
struct CellArtifacts {
    cart_reduced: ShallowTree,
    cart_leaves_before: usize,
    cart_secs: f64,
    exact: Option<Result<(ShallowTree, usize, bool, f64)>>,
}

/// Runs every (dataset, seed, method) cell. Failures are recorded and the
/// run continues; the CART tree and the exact tree are trained once per
/// split and shared by the methods that need them.
pub fn run_experiment(
    datasets: &[(String, Dataset)],
    methods: &[Method],
    seeds: &[u64],
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    cfg.validate()?;

    let cells: Vec<(usize, u64)> = (0..datasets.len())
        .flat_map(|d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    let results: Vec<(Vec<EvalRow>, Vec<RunFailure>)> = cells
        .par_iter()
        .map(|&(d, seed)| run_cell(&datasets[d].0, &datasets[d].1, seed, methods, cfg))
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (mut r, mut f) in results {
        rows.append(&mut r);
        failures.append(&mut f);
    }
    rows.sort_by(|a, b| {
        (&a.dataset, a.seed, a.method).cmp(&(&b.dataset, b.seed, b.method))
    });
    failures.sort_by(|a, b| {
        (&a.dataset, a.seed, a.method).cmp(&(&b.dataset, b.seed, b.method))
    });
    let partial = !failures.is_empty();
    Ok(EvalReport {
        config: cfg.clone(),
        rows,
        failures,
        partial,
    })
}

fn run_cell(
    name: &str,
    ds: &Dataset,
    seed: u64,
    methods: &[Method],
    cfg: &ExperimentConfig,
) -> (Vec<EvalRow>, Vec<RunFailure>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let fail_all = |message: String, failures: &mut Vec<RunFailure>| {
        for &method in methods {
            failures.push(RunFailure {
                dataset: name.to_string(),
                seed,
                method,
                message: message.clone(),
            });
        }
    };

    let spec = SplitSpec {
        seed,
        train_fraction: cfg.train_fraction,
        train_cap: cfg.train_cap,
    };
    let (train, test) = match split_dataset(ds, &spec) {
        Ok(pair) => pair,
        Err(e) => {
            fail_all(e.to_string(), &mut failures);
            return (rows, failures);
        }
    };

    // CART backs every method: it is the cart artifact and the warmstart.
    let cart_start = Instant::now();
    let cart = cart_train(&train, &CartConfig::at(cfg.depth, cfg.n_min))
        .map(|tree| {
            let leaves_before = tree.leaf_count();
            (reduce_tree(&tree, &train), leaves_before)
        });
    let cart_secs = cart_start.elapsed().as_secs_f64();
    let (cart_reduced, cart_leaves_before) = match cart {
        Ok(pair) => pair,
        Err(e) => {
            fail_all(e.to_string(), &mut failures);
            return (rows, failures);
        }
    };
    let mut artifacts = CellArtifacts {
        cart_reduced,
        cart_leaves_before,
        cart_secs,
        exact: None,
    };
    if methods.iter().any(|m| m.needs_exact()) {
        let start = Instant::now();
        let result = solve(&train, &cfg.search_config(seed), Some(&artifacts.cart_reduced))
            .map(|r| {
                let leaves_before = r.tree.leaf_count();
                (
                    reduce_tree(&r.tree, &train),
                    leaves_before,
                    r.proven_optimal,
                    start.elapsed().as_secs_f64(),
                )
            });
        artifacts.exact = Some(result);
    }

    for &method in methods {
        match run_method(name, seed, method, &artifacts, &train, &test, cfg) {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(RunFailure {
                dataset: name.to_string(),
                seed,
                method,
                message: e.to_string(),
            }),
        }
    }
    (rows, failures)
}

fn run_method(
    name: &str,
    seed: u64,
    method: Method,
    artifacts: &CellArtifacts,
    train: &Dataset,
    test: &Dataset,
    cfg: &ExperimentConfig,
) -> Result<EvalRow> {
    let (tree, leaves_before, proven_optimal, base_secs) = if method.needs_exact() {
        match artifacts.exact.as_ref().expect("exact artifact requested") {
            Ok((tree, leaves_before, proven, secs)) => (
                tree.clone(),
                *leaves_before,
                *proven,
                artifacts.cart_secs + secs,
            ),
            Err(e) => return Err(Error::InvalidConfig(e.to_string())),
        }
    } else {
        (
            artifacts.cart_reduced.clone(),
            artifacts.cart_leaves_before,
            false,
            artifacts.cart_secs,
        )
    };

    let hybrid: Option<(HybridTree, f64)> = if method.is_hybrid() {
        let start = Instant::now();
        let model = extend_tree(&tree, train, cfg.extend_iterations, cfg.cv_folds, seed)?;
        Some((model, start.elapsed().as_secs_f64()))
    } else {
        None
    };

    let (train_leaf, train_stats) = leaf_accuracy(&tree, train);
    let (test_leaf, _) = leaf_accuracy(&tree, test);
    let objective_value = match cfg.objective {
        Objective::LeafAccuracy => train_leaf,
        Objective::Misclassification => train_stats
            .per_leaf
            .iter()
            .map(|s| s.correct)
            .sum::<usize>() as f64,
    };
    Ok(EvalRow {
        dataset: name.to_string(),
        seed,
        method,
        train_leaf_accuracy: train_leaf,
        test_leaf_accuracy: test_leaf,
        train_model_accuracy: train_stats.model_accuracy(),
        test_model_accuracy: model_accuracy(&tree, test),
        hybrid_train_accuracy: hybrid.as_ref().map(|(h, _)| model_accuracy(h, train)),
        hybrid_test_accuracy: hybrid.as_ref().map(|(h, _)| model_accuracy(h, test)),
        agreement_rate: hybrid.as_ref().map(|(h, _)| agreement_rate(h, test)),
        leaves_before,
        leaves_after: tree.leaf_count(),
        objective_value,
        proven_optimal,
        wall_time_secs: base_secs + hybrid.map_or(0.0, |(_, secs)| secs),
    })
}

#[derive(Serialize)]
struct TimingSummary {
    runs: usize,
    mean_secs: f64,
    total_secs: f64,
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    config: &'a ExperimentConfig,
    partial: bool,
    failures: &'a [RunFailure],
    mean_ranks: BTreeMap<String, f64>,
    timings: BTreeMap<String, TimingSummary>,
    comparisons: Vec<MethodComparison>,
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `raw.csv`, `aggregate.csv`, and `summary.json` into `dir` and
/// returns their paths. Wall times appear only in the JSON summary, so the
/// CSVs are byte-identical whenever the rows are.
pub fn emit_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source: std::io::Error| Error::Io { path, source }
    };

    let raw_path = dir.join("raw.csv");
    let mut raw = csv::Writer::from_writer(Vec::new());
    raw.write_record([
        "dataset",
        "seed",
        "method",
        "train_leaf_accuracy",
        "test_leaf_accuracy",
        "train_model_accuracy",
        "test_model_accuracy",
        "hybrid_train_accuracy",
        "hybrid_test_accuracy",
        "agreement_rate",
        "leaves_before",
        "leaves_after",
        "objective_value",
        "proven_optimal",
    ])?;
    for row in &report.rows {
        raw.write_record([
            row.dataset.clone(),
            row.seed.to_string(),
            row.method.to_string(),
            row.train_leaf_accuracy.to_string(),
            row.test_leaf_accuracy.to_string(),
            row.train_model_accuracy.to_string(),
            row.test_model_accuracy.to_string(),
            fmt_opt(row.hybrid_train_accuracy),
            fmt_opt(row.hybrid_test_accuracy),
            fmt_opt(row.agreement_rate),
            row.leaves_before.to_string(),
            row.leaves_after.to_string(),
            row.objective_value.to_string(),
            row.proven_optimal.to_string(),
        ])?;
    }
    let raw_bytes = raw.into_inner().expect("csv into_inner cannot fail on Vec");
    std::fs::write(&raw_path, raw_bytes).map_err(io_err(&raw_path))?;

    let aggregate_path = dir.join("aggregate.csv");
    let mut agg = csv::Writer::from_writer(Vec::new());
    agg.write_record([
        "dataset",
        "method",
        "runs",
        "train_leaf_mean",
        "train_leaf_std",
        "test_leaf_mean",
        "test_leaf_std",
        "train_model_mean",
        "train_model_std",
        "test_model_mean",
        "test_model_std",
        "hybrid_train_mean",
        "hybrid_test_mean",
        "agreement_mean",
        "leaves_after_mean",
        "objective_mean",
        "proven_optimal_rate",
        "test_leaf_rank",
    ])?;
    for row in report.aggregate() {
        agg.write_record([
            row.dataset.clone(),
            row.method.to_string(),
            row.runs.to_string(),
            row.train_leaf_mean.to_string(),
            row.train_leaf_std.to_string(),
            row.test_leaf_mean.to_string(),
            row.test_leaf_std.to_string(),
            row.train_model_mean.to_string(),
            row.train_model_std.to_string(),
            row.test_model_mean.to_string(),
            row.test_model_std.to_string(),
            fmt_opt(row.hybrid_train_mean),
            fmt_opt(row.hybrid_test_mean),
            fmt_opt(row.agreement_mean),
            row.leaves_after_mean.to_string(),
            row.objective_mean.to_string(),
            row.proven_optimal_rate.to_string(),
            row.test_leaf_rank.to_string(),
        ])?;
    }
    let agg_bytes = agg.into_inner().expect("csv into_inner cannot fail on Vec");
    std::fs::write(&aggregate_path, agg_bytes).map_err(io_err(&aggregate_path))?;

    let mut timings: BTreeMap<String, TimingSummary> = BTreeMap::new();
    for row in &report.rows {
        let entry = timings
            .entry(row.method.to_string())
            .or_insert(TimingSummary {
                runs: 0,
                mean_secs: 0.0,
                total_secs: 0.0,
            });
        entry.runs += 1;
        entry.total_secs += row.wall_time_secs;
    }
    for summary in timings.values_mut() {
        summary.mean_secs = summary.total_secs / summary.runs as f64;
    }
    let summary = JsonSummary {
        config: &report.config,
        partial: report.partial,
        failures: &report.failures,
        mean_ranks: report
            .mean_ranks()
            .into_iter()
            .map(|(m, r)| (m.to_string(), r))
            .collect(),
        timings,
        comparisons: report.comparisons(),
    };
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serialization cannot fail");
    std::fs::write(&summary_path, text).map_err(io_err(&summary_path))?;

    Ok(vec![raw_path, aggregate_path, summary_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Two noisy clusters per class over `p` features.
    fn synthetic(seed: u64, n: usize, p: usize) -> Dataset {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let label = rng.gen_range(0..2usize);
            let center = if label == 0 { 0.3 } else { 0.7 };
            let row: Vec<f64> = (0..p)
                .map(|j| {
                    if j == 0 {
                        (center + rng.gen_range(-0.25..0.25f64)).clamp(0.0, 1.0)
                    } else {
                        rng.gen()
                    }
                })
                .collect();
            rows.push(row);
            labels.push(label);
        }
        Dataset::with_classes(rows, labels, 2).unwrap()
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            depth: 2,
            n_min: 3,
            time_budget_secs: 30.0,
            extend_iterations: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_dataset_two_methods_one_seed_yields_two_rows() {
        let datasets = vec![("synth".to_string(), synthetic(0, 60, 2))];
        let report = run_experiment(
            &datasets,
            &[Method::Cart, Method::Exact],
            &[0],
            &small_config(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(!report.partial);
        for row in &report.rows {
            for acc in [
                row.train_leaf_accuracy,
                row.test_leaf_accuracy,
                row.train_model_accuracy,
                row.test_model_accuracy,
            ] {
                assert!((0.0..=1.0).contains(&acc));
            }
        }
        let cart = &report.rows[0];
        let exact = &report.rows[1];
        assert_eq!(cart.method, Method::Cart);
        assert_eq!(exact.method, Method::Exact);
        assert!(exact.train_leaf_accuracy >= cart.train_leaf_accuracy - 1e-12);
    }

    #[test]
    fn exact_dominates_cart_on_training_leaf_accuracy() {
        let datasets: Vec<(String, Dataset)> = (0..4)
            .map(|i| (format!("synth{i}"), synthetic(i as u64 + 10, 50, 2)))
            .collect();
        let report = run_experiment(
            &datasets,
            &[Method::Cart, Method::Exact],
            &[0, 1],
            &small_config(),
        )
        .unwrap();
        let by_key: BTreeMap<(String, u64, Method), f64> = report
            .rows
            .iter()
            .map(|r| {
                (
                    (r.dataset.clone(), r.seed, r.method),
                    r.train_leaf_accuracy,
                )
            })
            .collect();
        for ((dataset, seed, method), value) in &by_key {
            if *method == Method::Exact {
                let cart = by_key[&(dataset.clone(), *seed, Method::Cart)];
                assert!(value >= &(cart - 1e-12), "{dataset} seed {seed}");
            }
        }
    }

    #[test]
    fn hybrid_rows_carry_extension_metrics() {
        let datasets = vec![("synth".to_string(), synthetic(3, 60, 2))];
        let report =
            run_experiment(&datasets, &[Method::HybridCart], &[0], &small_config()).unwrap();
        assert!(!report.partial, "failures: {:?}", report.failures);
        let row = &report.rows[0];
        let hybrid_train = row.hybrid_train_accuracy.unwrap();
        assert!(hybrid_train >= row.train_model_accuracy - 1e-12);
        assert!((0.0..=1.0).contains(&row.hybrid_test_accuracy.unwrap()));
        assert!((0.0..=1.0).contains(&row.agreement_rate.unwrap()));
    }

    #[test]
    fn failures_are_recorded_and_the_run_continues() {
        let datasets = vec![
            ("tiny".to_string(), synthetic(4, 12, 2)),
            ("fine".to_string(), synthetic(5, 80, 2)),
        ];
        // n_min 40 exceeds the tiny training split, so its exact run fails.
        let cfg = ExperimentConfig {
            depth: 2,
            n_min: 40,
            time_budget_secs: 30.0,
            extend_iterations: 2,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&datasets, &[Method::Exact], &[0], &cfg).unwrap();
        assert!(report.partial);
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].dataset, "tiny");
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].dataset, "fine");
    }

    #[test]
    fn per_dataset_ranks_sum_to_the_triangular_number() {
        let datasets: Vec<(String, Dataset)> = (0..3)
            .map(|i| (format!("synth{i}"), synthetic(i as u64 + 20, 60, 2)))
            .collect();
        let methods = [Method::Cart, Method::Exact, Method::HybridCart];
        let report = run_experiment(&datasets, &methods, &[0], &small_config()).unwrap();
        assert!(!report.partial, "failures: {:?}", report.failures);
        let aggregates = report.aggregate();
        for dataset in ["synth0", "synth1", "synth2"] {
            let sum: f64 = aggregates
                .iter()
                .filter(|a| a.dataset == dataset)
                .map(|a| a.test_leaf_rank)
                .sum();
            assert!((sum - 6.0).abs() < 1e-12, "{dataset}: {sum}");
        }
    }

    #[test]
    fn comparison_diff_equals_the_subtraction_of_aggregate_columns() {
        let datasets: Vec<(String, Dataset)> = (0..3)
            .map(|i| (format!("synth{i}"), synthetic(i as u64 + 30, 50, 2)))
            .collect();
        let report = run_experiment(
            &datasets,
            &[Method::Cart, Method::Exact],
            &[0, 1],
            &small_config(),
        )
        .unwrap();
        let aggregates = report.aggregate();
        let comparison = report
            .comparisons()
            .into_iter()
            .find(|c| c.method_a == Method::Cart && c.method_b == Method::Exact)
            .unwrap();
        let diffs: Vec<f64> = ["synth0", "synth1", "synth2"]
            .iter()
            .map(|d| {
                let of = |m: Method| {
                    aggregates
                        .iter()
                        .find(|a| a.dataset == *d && a.method == m)
                        .unwrap()
                        .test_leaf_mean
                };
                of(Method::Cart) - of(Method::Exact)
            })
            .collect();
        assert!((comparison.mean_test_leaf_diff - mean(&diffs)).abs() < 1e-12);
        assert_eq!(
            comparison.wins_a + comparison.losses_a + comparison.ties,
            comparison.datasets
        );
        assert!(comparison.sign_p > 0.0 && comparison.sign_p <= 1.0);
    }

    #[test]
    fn reruns_emit_byte_identical_csv_files() {
        let datasets = vec![("synth".to_string(), synthetic(7, 60, 2))];
        let methods = [Method::Cart, Method::Exact];
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = run_experiment(&datasets, &methods, &[0, 1], &small_config()).unwrap();
        let b = run_experiment(&datasets, &methods, &[0, 1], &small_config()).unwrap();
        emit_report(&a, dir_a.path()).unwrap();
        emit_report(&b, dir_b.path()).unwrap();
        for file in ["raw.csv", "aggregate.csv"] {
            let bytes_a = std::fs::read(dir_a.path().join(file)).unwrap();
            let bytes_b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{file} differs across reruns");
        }
    }

    #[test]
    fn empty_reports_emit_headers_only() {
        let report = EvalReport {
            config: ExperimentConfig::default(),
            rows: Vec::new(),
            failures: Vec::new(),
            partial: false,
        };
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        let raw = std::fs::read_to_string(dir.path().join("raw.csv")).unwrap();
        assert_eq!(raw.lines().count(), 1);
        assert!(raw.starts_with("dataset,seed,method,"));
    }

    #[test]
    fn method_names_round_trip() {
        for method in Method::ALL {
            assert_eq!(method.to_string().parse::<Method>().unwrap(), method);
        }
        assert!("boost".parse::<Method>().is_err());
        assert_eq!(
            serde_json::to_string(&Method::HybridExact).unwrap(),
            "\"hybrid-exact\""
        );
    }
}
