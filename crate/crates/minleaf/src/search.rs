//! Native exact optimization of the worst-leaf objective.
//!
//! [`solve`] runs a depth-first branch-and-bound over tree structures: at
//! every node it either stops (the node becomes a leaf) or splits on one of
//! the midpoints between consecutive distinct values of the node's own
//! samples. Subtrees are independent once a split fixes the sample
//! partition, so the best tree under a split combines the best left subtree
//! with the best right subtree; candidate splits are tried in decreasing
//! order of their one-level score and abandoned as soon as one side can no
//! longer beat the incumbent. The search is exact when it runs to
//! completion and anytime otherwise: it never returns less than the
//! warmstart and reports `proven_optimal` only when the whole space was
//! covered within the budget.
//!
//! [`brute_force_optimal`] is a deliberately naive oracle over the same tree
//! space (complete trees over global value-gap midpoints, degenerate
//! everything-right splits allowed) used to cross-check the solver.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cart::{cart_train, CartConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mio::Objective;
use crate::tree::{leaf_accuracy, ShallowTree, TreeNode};

/// Upper limit on the number of complete trees the brute-force oracle will
/// enumerate.
pub const ENUMERATION_CAP: u128 = 10_000_000;

/// How the solver approaches the depth budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Search the full-depth space from scratch.
    Direct,
    /// Seed the incumbent with a CART tree of the same depth and minimum
    /// leaf size (built automatically when none is supplied).
    Warmstarted,
    /// Solve depths 1..=d in sequence, each warmstarted by the previous
    /// result, with budget shares doubling per level.
    Gradual,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Direct => "direct",
            Strategy::Warmstarted => "warmstarted",
            Strategy::Gradual => "gradual",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "warmstarted" => Ok(Strategy::Warmstarted),
            "gradual" => Ok(Strategy::Gradual),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy {other:?}; expected \"direct\", \"warmstarted\" or \"gradual\""
            ))),
        }
    }
}

/// Parameters of one exact-search run.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub depth: usize,
    pub n_min: usize,
    pub objective: Objective,
    pub strategy: Strategy,
    pub time_budget: Duration,
    /// Recorded in experiment manifests; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            depth: 4,
            n_min: 50,
            objective: Objective::LeafAccuracy,
            strategy: Strategy::Warmstarted,
            time_budget: Duration::from_secs(60),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.depth > 16 {
            return Err(Error::InvalidConfig(format!(
                "search depth {} out of range 1..=16",
                self.depth
            )));
        }
        if self.n_min < 1 {
            return Err(Error::InvalidConfig("n_min must be at least 1".into()));
        }
        if self.time_budget.is_zero() {
            return Err(Error::InvalidConfig("time budget must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a search run.
///
/// `objective_value` is the training value of `tree`: the minimum per-leaf
/// accuracy for the worst-leaf objective, or the number of correctly
/// classified training samples for the misclassification objective.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub tree: ShallowTree,
    pub objective_value: f64,
    /// Upper bound on the optimum; equals `objective_value` when proven.
    pub best_bound: f64,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    pub elapsed: Duration,
}

/// Midpoints between consecutive distinct values, per feature. A constant
/// feature yields an empty list. Any axis-aligned split of the data is
/// realized by one of these thresholds, so they are a sufficient candidate
/// set for both objectives.
pub fn candidate_splits(train: &Dataset) -> Vec<Vec<f64>> {
    (0..train.p())
        .map(|j| {
            let mut values: Vec<f64> = (0..train.n()).map(|i| train.value(i, j)).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
        })
        .collect()
}

fn class_counts(train: &Dataset, indices: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; train.k()];
    for &i in indices {
        counts[train.label(i)] += 1;
    }
    counts
}

/// Majority class (ties to the lowest index) and its count.
fn majority(counts: &[usize]) -> (usize, usize) {
    let mut best = (0usize, 0usize);
    for (class, &count) in counts.iter().enumerate() {
        if count > best.1 {
            best = (class, count);
        }
    }
    best
}

/// Training objective value of a tree, or `None` when some non-empty leaf
/// falls below the minimum size.
fn evaluate_tree(
    tree: &ShallowTree,
    train: &Dataset,
    objective: Objective,
    n_min: usize,
) -> Option<f64> {
    let (accuracy, stats) = leaf_accuracy(tree, train);
    if stats
        .per_leaf
        .iter()
        .any(|s| s.count > 0 && s.count < n_min)
    {
        return None;
    }
    Some(match objective {
        Objective::LeafAccuracy => accuracy,
        Objective::Misclassification => {
            stats.per_leaf.iter().map(|s| s.correct).sum::<usize>() as f64
        }
    })
}

/// Exhaustive oracle: enumerates every complete depth-`d` tree whose branch
/// nodes choose either a global value-gap midpoint or the degenerate
/// "everything right" split, labels leaves with their majority class, skips
/// trees with a non-empty leaf below `n_min`, and returns the exact optimum.
///
/// Subtrees are enumerated per sample subset (the optimum under a fixed
/// split combines each side's own optimum, since the sides share no leaves),
/// which changes the running time but not the result. The enumeration cap
/// still counts whole trees.
pub fn brute_force_optimal(train: &Dataset, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    if cfg.n_min > train.n() {
        return Err(Error::MinLeafTooLarge {
            n_min: cfg.n_min,
            n: train.n(),
        });
    }
    let mut options: Vec<(usize, f64)> = vec![(0, 0.0)];
    for (j, thresholds) in candidate_splits(train).into_iter().enumerate() {
        options.extend(thresholds.into_iter().map(|t| (j, t)));
    }
    let branches = (1u32 << cfg.depth) - 1;
    let count = (options.len() as u128)
        .checked_pow(branches)
        .unwrap_or(u128::MAX);
    if count > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            count,
            cap: ENUMERATION_CAP,
        });
    }

    let start = Instant::now();
    let mut nodes = 0u64;
    let all: Vec<usize> = (0..train.n()).collect();
    let (value, root) = enumerate(
        train,
        &all,
        cfg.depth,
        &options,
        cfg.objective,
        cfg.n_min,
        &mut nodes,
    );
    assert!(
        value.is_finite(),
        "a single-leaf tree is always available, so the optimum is finite"
    );
    let tree = ShallowTree::new(root);
    Ok(SearchResult {
        objective_value: value,
        best_bound: value,
        proven_optimal: true,
        nodes_explored: nodes,
        elapsed: start.elapsed(),
        tree,
    })
}

/// Value of turning `indices` into a leaf: +inf for an empty leaf (excluded
/// from the minimum; contributes nothing), -inf when the leaf is non-empty
/// but under the minimum size (infeasible; poisons min and sum alike).
fn leaf_option(
    train: &Dataset,
    indices: &[usize],
    objective: Objective,
    n_min: usize,
) -> (f64, TreeNode) {
    if indices.is_empty() {
        let value = match objective {
            Objective::LeafAccuracy => f64::INFINITY,
            Objective::Misclassification => 0.0,
        };
        return (value, TreeNode::leaf(0));
    }
    let (class, count) = majority(&class_counts(train, indices));
    let value = if indices.len() < n_min {
        f64::NEG_INFINITY
    } else {
        match objective {
            Objective::LeafAccuracy => count as f64 / indices.len() as f64,
            Objective::Misclassification => count as f64,
        }
    };
    (value, TreeNode::leaf(class))
}

fn combine(objective: Objective, left: f64, right: f64) -> f64 {
    match objective {
        Objective::LeafAccuracy => left.min(right),
        Objective::Misclassification => left + right,
    }
}

fn enumerate(
    train: &Dataset,
    indices: &[usize],
    depth: usize,
    options: &[(usize, f64)],
    objective: Objective,
    n_min: usize,
    nodes: &mut u64,
) -> (f64, TreeNode) {
    *nodes += 1;
    let leaf = leaf_option(train, indices, objective, n_min);
    if depth == 0 || indices.is_empty() {
        // Below an empty node every structure scores the same; the leaf
        // stands in for all of them.
        return leaf;
    }
    let mut best: Option<(f64, TreeNode)> = None;
    for &(feature, threshold) in options {
        let (lo, hi): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| train.value(i, feature) < threshold);
        let (vl, tl) = enumerate(train, &lo, depth - 1, options, objective, n_min, nodes);
        let (vr, tr) = enumerate(train, &hi, depth - 1, options, objective, n_min, nodes);
        let value = combine(objective, vl, vr);
        if best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, TreeNode::branch(feature, threshold, tl, tr)));
        }
    }
    best.expect("options always include the degenerate split")
}

/// Exact branch-and-bound search. `warmstart`, when given, seeds the
/// incumbent under every strategy; `Warmstarted` additionally builds a CART
/// tree at the same depth and minimum leaf size when none is supplied.
pub fn solve(
    train: &Dataset,
    cfg: &SearchConfig,
    warmstart: Option<&ShallowTree>,
) -> Result<SearchResult> {
    cfg.validate()?;
    if cfg.n_min > train.n() {
        return Err(Error::MinLeafTooLarge {
            n_min: cfg.n_min,
            n: train.n(),
        });
    }
    if let Some(tree) = warmstart {
        if tree.depth() > cfg.depth {
            return Err(Error::DepthExceeded {
                tree_depth: tree.depth(),
                model_depth: cfg.depth,
            });
        }
    }

    match cfg.strategy {
        Strategy::Direct => run_bounded(train, cfg, warmstart.cloned()),
        Strategy::Warmstarted => {
            let tree = match warmstart {
                Some(tree) => tree.clone(),
                None => cart_train(train, &CartConfig::at(cfg.depth, cfg.n_min))?,
            };
            run_bounded(train, cfg, Some(tree))
        }
        Strategy::Gradual => {
            let start = Instant::now();
            let total = cfg.time_budget.as_secs_f64();
            let shares = (1u64 << cfg.depth) - 1;
            let mut incumbent = warmstart.cloned();
            let mut nodes = 0u64;
            let mut last = None;
            for level in 1..=cfg.depth {
                let share = (1u64 << (level - 1)) as f64 / shares as f64;
                let sub = SearchConfig {
                    depth: level,
                    strategy: Strategy::Direct,
                    time_budget: Duration::from_secs_f64(total * share),
                    ..*cfg
                };
                let result = run_bounded(train, &sub, incumbent.take())?;
                nodes += result.nodes_explored;
                incumbent = Some(result.tree.clone());
                last = Some(result);
            }
            let mut result = last.expect("depth >= 1");
            result.nodes_explored = nodes;
            result.elapsed = start.elapsed();
            Ok(result)
        }
    }
}

struct SearchCtx<'a> {
    train: &'a Dataset,
    objective: Objective,
    n_min: usize,
    deadline: Instant,
    complete: bool,
    nodes: u64,
}

fn run_bounded(
    train: &Dataset,
    cfg: &SearchConfig,
    warmstart: Option<ShallowTree>,
) -> Result<SearchResult> {
    let start = Instant::now();
    let mut ctx = SearchCtx {
        train,
        objective: cfg.objective,
        n_min: cfg.n_min,
        deadline: start + cfg.time_budget,
        complete: true,
        nodes: 0,
    };
    // A warmstart that violates the minimum leaf size cannot serve as an
    // incumbent; it is dropped rather than rejected, since the search itself
    // does not need it.
    let incumbent = warmstart.and_then(|tree| {
        evaluate_tree(&tree, train, cfg.objective, cfg.n_min).map(|value| (value, tree))
    });
    let alpha = incumbent
        .as_ref()
        .map_or(f64::NEG_INFINITY, |(value, _)| *value);

    let all: Vec<usize> = (0..train.n()).collect();
    let (value, root) = explore(&mut ctx, &all, cfg.depth, alpha);
    let best = if value > alpha {
        ShallowTree::new(root)
    } else {
        incumbent
            .map(|(_, tree)| tree)
            .unwrap_or_else(|| ShallowTree::new(root))
    };
    let objective_value = evaluate_tree(&best, train, cfg.objective, cfg.n_min)
        .expect("search trees and accepted incumbents respect the minimum leaf size");
    let best_bound = if ctx.complete {
        objective_value
    } else {
        match cfg.objective {
            Objective::LeafAccuracy => 1.0,
            Objective::Misclassification => train.n() as f64,
        }
    };
    Ok(SearchResult {
        tree: best,
        objective_value,
        best_bound,
        proven_optimal: ctx.complete,
        nodes_explored: ctx.nodes,
        elapsed: start.elapsed(),
    })
}

/// One-level split scores for every feasible `(feature, threshold)` over
/// `indices`: the value the split would earn if both children became leaves.
/// Splits leaving either side under the minimum size are omitted.
fn depth_one_scores(ctx: &SearchCtx, indices: &[usize]) -> Vec<(f64, usize, f64)> {
    let k = ctx.train.k();
    let total = class_counts(ctx.train, indices);
    let n = indices.len();
    let mut scores = Vec::new();
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(n);
    for j in 0..ctx.train.p() {
        sorted.clear();
        sorted.extend(
            indices
                .iter()
                .map(|&i| (ctx.train.value(i, j), ctx.train.label(i))),
        );
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left = vec![0usize; k];
        let mut left_max = 0usize;
        for idx in 0..n - 1 {
            left[sorted[idx].1] += 1;
            left_max = left_max.max(left[sorted[idx].1]);
            if sorted[idx].0 >= sorted[idx + 1].0 {
                continue;
            }
            let n_left = idx + 1;
            let n_right = n - n_left;
            if n_left < ctx.n_min || n_right < ctx.n_min {
                continue;
            }
            let right_max = (0..k).map(|c| total[c] - left[c]).max().unwrap();
            let threshold = (sorted[idx].0 + sorted[idx + 1].0) / 2.0;
            let score = match ctx.objective {
                Objective::LeafAccuracy => (left_max as f64 / n_left as f64)
                    .min(right_max as f64 / n_right as f64),
                Objective::Misclassification => (left_max + right_max) as f64,
            };
            scores.push((score, j, threshold));
        }
    }
    scores
}

/// Best value achievable for `indices` with `depth` remaining levels, and a
/// tree achieving it. Fail-soft: the result is exact whenever it exceeds
/// `alpha`; values at or below `alpha` only certify that the true optimum is
/// also at or below it. Every returned (value, tree) pair is achievable.
fn explore(ctx: &mut SearchCtx, indices: &[usize], depth: usize, alpha: f64) -> (f64, TreeNode) {
    ctx.nodes += 1;
    let leaf = leaf_option(ctx.train, indices, ctx.objective, ctx.n_min);
    let counts = class_counts(ctx.train, indices);
    let (_, majority_count) = majority(&counts);
    let n = indices.len();
    // Exact shortcuts: a pure node cannot be beaten by splitting it, and a
    // node too small to split both sides to the minimum size has no legal
    // split at all (subset midpoints always populate both sides).
    if depth == 0 || majority_count == n || n < 2 * ctx.n_min {
        return leaf;
    }
    if Instant::now() >= ctx.deadline {
        ctx.complete = false;
        return leaf;
    }

    let mut candidates = depth_one_scores(ctx, indices);
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.partial_cmp(&b.2).unwrap())
    });

    let perfect = match ctx.objective {
        Objective::LeafAccuracy => 1.0,
        Objective::Misclassification => n as f64,
    };
    let mut best = leaf;
    for &(score, feature, threshold) in &candidates {
        if best.0 >= perfect {
            break;
        }
        if Instant::now() >= ctx.deadline {
            ctx.complete = false;
            break;
        }
        let target = alpha.max(best.0);
        if depth == 1 {
            // The scores are exact one-level values; no recursion needed.
            if score <= target {
                break; // sorted descending, nothing better follows
            }
            let (lo, hi): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| ctx.train.value(i, feature) < threshold);
            let (lc, _) = majority(&class_counts(ctx.train, &lo));
            let (rc, _) = majority(&class_counts(ctx.train, &hi));
            best = (
                score,
                TreeNode::branch(feature, threshold, TreeNode::leaf(lc), TreeNode::leaf(rc)),
            );
            continue;
        }
        let (lo, hi): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| ctx.train.value(i, feature) < threshold);
        // The left side must beat what remains of the target once the right
        // side contributes at most its size (sum) or nothing (min).
        let alpha_left = match ctx.objective {
            Objective::LeafAccuracy => target,
            Objective::Misclassification => target - hi.len() as f64,
        };
        let (vl, tl) = explore(ctx, &lo, depth - 1, alpha_left);
        if vl <= alpha_left {
            continue;
        }
        let alpha_right = match ctx.objective {
            Objective::LeafAccuracy => target,
            Objective::Misclassification => target - vl,
        };
        let (vr, tr) = explore(ctx, &hi, depth - 1, alpha_right);
        if vr <= alpha_right {
            continue;
        }
        let value = combine(ctx.objective, vl, vr);
        if value > best.0 {
            best = (value, TreeNode::branch(feature, threshold, tl, tr));
        }
    }
    best
}
