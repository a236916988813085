//! Gradient-boosted trees and the per-leaf hybrid extension.
//!
//! [`gbdt_train`] is a from-scratch second-order boosting implementation
//! with logistic loss: each round fits a regression tree to the per-sample
//! gradients and hessians of the current margins, with L1/L2 shrinkage on
//! leaf weights, a per-split gain penalty, hessian-based minimum child
//! weight, and row/column subsampling. Multiclass data is handled
//! one-vs-rest. [`extend_tree`] then upgrades a reduced shallow tree into a
//! [`HybridTree`]: each leaf keeps its own extender, which is the majority
//! class when the leaf is already pure, a single depth-5 tree when some
//! class in the leaf is too rare for cross-validation, and otherwise the
//! best of a random hyperparameter search. A final guard swaps any extender
//! that underperforms the leaf's majority class back to the majority, so
//! the hybrid never scores below the shallow tree on the training data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tree::{Classifier, ShallowTree};

/// Hyperparameters of one boosted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    pub learning_rate: f64,
    /// Fraction of rows drawn for each tree.
    pub subsample: f64,
    /// Fraction of features available to each tree.
    pub colsample_by_tree: f64,
    /// Fraction of the tree's features available at each depth level.
    pub colsample_by_level: f64,
    /// Minimum gain a split must clear.
    pub gamma: f64,
    /// L1 shrinkage on leaf weights.
    pub alpha: f64,
    /// L2 shrinkage on leaf weights.
    pub lambda: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 100,
            max_depth: 3,
            min_child_weight: 1.0,
            learning_rate: 0.3,
            subsample: 1.0,
            colsample_by_tree: 1.0,
            colsample_by_level: 1.0,
            gamma: 1e-8,
            alpha: 1e-8,
            lambda: 1.0,
        }
    }
}

impl GbdtConfig {
    /// The fixed configuration used for leaves too thin to cross-validate:
    /// one boosting round over a single tree of depth at most 5.
    pub fn single_tree() -> Self {
        GbdtConfig {
            n_trees: 1,
            max_depth: 5,
            ..GbdtConfig::default()
        }
    }

    /// Draws a configuration from the search distributions: uniform integer
    /// tree counts and depths, log-uniform regularizers, uniform rates.
    pub fn sample(rng: &mut impl Rng) -> Self {
        let log_uniform =
            |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| (rng.gen_range(lo.ln()..=hi.ln())).exp();
        GbdtConfig {
            n_trees: rng.gen_range(10..=500),
            max_depth: rng.gen_range(1..=7),
            min_child_weight: log_uniform(rng, 1.0, 100.0),
            learning_rate: rng.gen_range(1e-5..=0.7),
            subsample: rng.gen_range(0.5..=1.0),
            colsample_by_tree: rng.gen_range(0.5..=1.0),
            colsample_by_level: rng.gen_range(0.5..=1.0),
            gamma: log_uniform(rng, 1e-8, 7.0),
            alpha: log_uniform(rng, 1e-8, 100.0),
            lambda: log_uniform(rng, 1.0, 4.0),
        }
    }
}

/// A regression tree node with real-valued leaf weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegNode {
    Branch {
        feature: usize,
        threshold: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
    Leaf {
        weight: f64,
    },
}

impl RegNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            RegNode::Leaf { weight } => *weight,
            RegNode::Branch {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] < *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RegNode::Leaf { .. } => 0,
            RegNode::Branch { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A trained boosted model. Binary problems use a single margin
/// `base_scores[0] + lr * sum(trees)` through a sigmoid; `k > 2` classes
/// keep one one-vs-rest margin per class and predict the argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub config: GbdtConfig,
    pub k: usize,
    /// Clamped log-odds of each group's positive rate.
    pub base_scores: Vec<f64>,
    /// `groups[g][round]` is the round-th tree of group `g`.
    pub groups: Vec<Vec<RegNode>>,
    /// Mean training log-loss before any tree, then after each round.
    pub train_loss: Vec<f64>,
}

impl GbdtModel {
    fn group_count(k: usize) -> usize {
        if k > 2 {
            k
        } else {
            1
        }
    }

    pub fn margin(&self, x: &[f64], group: usize) -> f64 {
        let trees: f64 = self.groups[group].iter().map(|t| t.predict(x)).sum();
        self.base_scores[group] + self.config.learning_rate * trees
    }
}

impl Classifier for GbdtModel {
    fn predict(&self, x: &[f64]) -> usize {
        if self.k == 1 {
            0
        } else if self.k == 2 {
            if self.margin(x, 0) >= 0.0 {
                1
            } else {
                0
            }
        } else {
            let mut best = (0usize, f64::NEG_INFINITY);
            for g in 0..self.groups.len() {
                let margin = self.margin(x, g);
                if margin > best.1 {
                    best = (g, margin);
                }
            }
            best.0
        }
    }
}

fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Trains a boosted model. Deterministic under a fixed seed; subsampling and
/// column sampling are the only randomized ingredients.
pub fn gbdt_train(data: &Dataset, cfg: &GbdtConfig, seed: u64) -> GbdtModel {
    let n = data.n();
    let p = data.p();
    let groups = GbdtModel::group_count(data.k());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // One binary target vector and margin track per group.
    let targets: Vec<Vec<f64>> = (0..groups)
        .map(|g| {
            let positive = if data.k() == 2 { 1 } else { g };
            (0..n)
                .map(|i| (data.label(i) == positive) as u8 as f64)
                .collect()
        })
        .collect();
    let base_scores: Vec<f64> = targets
        .iter()
        .map(|t| {
            let rate = (t.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
            (rate / (1.0 - rate)).ln()
        })
        .collect();
    let mut margins: Vec<Vec<f64>> = base_scores.iter().map(|&b| vec![b; n]).collect();
    let mut trees: Vec<Vec<RegNode>> = vec![Vec::new(); groups];

    let mean_loss = |margins: &[Vec<f64>]| -> f64 {
        let total: f64 = (0..n)
            .map(|i| {
                (0..groups)
                    .map(|g| {
                        let sign = 2.0 * targets[g][i] - 1.0;
                        softplus(-sign * margins[g][i])
                    })
                    .sum::<f64>()
            })
            .sum();
        total / n as f64
    };
    let mut train_loss = Vec::with_capacity(cfg.n_trees + 1);
    train_loss.push(mean_loss(&margins));

    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    for _round in 0..cfg.n_trees {
        for g in 0..groups {
            for i in 0..n {
                let prob = sigmoid(margins[g][i]);
                grad[i] = prob - targets[g][i];
                hess[i] = prob * (1.0 - prob);
            }
            let rows: Vec<usize> = if cfg.subsample < 1.0 {
                let picked: Vec<usize> =
                    (0..n).filter(|_| rng.gen_bool(cfg.subsample)).collect();
                if picked.is_empty() {
                    (0..n).collect()
                } else {
                    picked
                }
            } else {
                (0..n).collect()
            };
            let tree_features = sample_features(&mut rng, p, cfg.colsample_by_tree);
            let tree = build_reg_tree(
                data,
                &rows,
                &grad,
                &hess,
                cfg,
                &tree_features,
                cfg.max_depth,
                &mut rng,
            );
            for (i, margin) in margins[g].iter_mut().enumerate() {
                *margin += cfg.learning_rate * tree.predict(data.row(i));
            }
            trees[g].push(tree);
        }
        train_loss.push(mean_loss(&margins));
    }

    GbdtModel {
        config: *cfg,
        k: data.k(),
        base_scores,
        groups: trees,
        train_loss,
    }
}

/// Draws `ceil(fraction * count)` distinct feature indices, sorted.
fn sample_features(rng: &mut impl Rng, count: usize, fraction: f64) -> Vec<usize> {
    let keep = ((fraction * count as f64).ceil() as usize).clamp(1, count);
    let mut pool: Vec<usize> = (0..count).collect();
    for i in 0..keep {
        let j = rng.gen_range(i..count);
        pool.swap(i, j);
    }
    let mut chosen = pool[..keep].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Leaf weight with L1 soft-thresholding and L2 shrinkage.
fn leaf_weight(g: f64, h: f64, cfg: &GbdtConfig) -> f64 {
    let shrunk = if g > cfg.alpha {
        g - cfg.alpha
    } else if g < -cfg.alpha {
        g + cfg.alpha
    } else {
        0.0
    };
    -shrunk / (h + cfg.lambda)
}

/// Score contribution of a node holding gradient sum `g`, hessian sum `h`.
fn node_score(g: f64, h: f64, cfg: &GbdtConfig) -> f64 {
    let shrunk = (g.abs() - cfg.alpha).max(0.0);
    shrunk * shrunk / (h + cfg.lambda)
}

#[allow(clippy::too_many_arguments)]
fn build_reg_tree(
    data: &Dataset,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    cfg: &GbdtConfig,
    tree_features: &[usize],
    depth_left: usize,
    rng: &mut impl Rng,
) -> RegNode {
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h: f64 = rows.iter().map(|&i| hess[i]).sum();
    if depth_left == 0 || rows.len() < 2 {
        return RegNode::Leaf {
            weight: leaf_weight(g, h, cfg),
        };
    }
    let level_features = if cfg.colsample_by_level < 1.0 {
        let picks = sample_features(rng, tree_features.len(), cfg.colsample_by_level);
        picks.into_iter().map(|i| tree_features[i]).collect()
    } else {
        tree_features.to_vec()
    };

    let parent_score = node_score(g, h, cfg);
    let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    for &feature in &level_features {
        sorted.clear();
        sorted.extend(rows.iter().map(|&i| (data.value(i, feature), i)));
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut gl = 0.0;
        let mut hl = 0.0;
        for idx in 0..sorted.len() - 1 {
            gl += grad[sorted[idx].1];
            hl += hess[sorted[idx].1];
            if sorted[idx].0 >= sorted[idx + 1].0 {
                continue;
            }
            let (gr, hr) = (g - gl, h - hl);
            if hl < cfg.min_child_weight || hr < cfg.min_child_weight {
                continue;
            }
            let gain =
                0.5 * (node_score(gl, hl, cfg) + node_score(gr, hr, cfg) - parent_score)
                    - cfg.gamma;
            if gain > 0.0 && best.map_or(true, |(b, _, _)| gain > b) {
                best = Some((gain, feature, (sorted[idx].0 + sorted[idx + 1].0) / 2.0));
            }
        }
    }

    match best {
        None => RegNode::Leaf {
            weight: leaf_weight(g, h, cfg),
        },
        Some((_, feature, threshold)) => {
            let (lo, hi): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| data.value(i, feature) < threshold);
            let left = build_reg_tree(data, &lo, grad, hess, cfg, tree_features, depth_left - 1, rng);
            let right =
                build_reg_tree(data, &hi, grad, hess, cfg, tree_features, depth_left - 1, rng);
            RegNode::Branch {
                feature,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// The model attached to one leaf of a hybrid tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafExtender {
    /// Predict this class unconditionally.
    Majority { class: usize },
    /// One boosting round over a single tree of depth at most 5, for leaves
    /// where some class is too rare to cross-validate.
    SingleTree(GbdtModel),
    /// Winner of the per-leaf hyperparameter search.
    Gbdt(GbdtModel),
}

impl LeafExtender {
    fn predict(&self, x: &[f64]) -> usize {
        match self {
            LeafExtender::Majority { class } => *class,
            LeafExtender::SingleTree(model) | LeafExtender::Gbdt(model) => model.predict(x),
        }
    }
}

/// A shallow tree whose leaves each delegate to their own extender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTree {
    pub shallow: ShallowTree,
    /// Indexed by leaf identity (left-to-right).
    pub extenders: Vec<LeafExtender>,
}

impl HybridTree {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hybrid serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("invalid hybrid json: {e}")))
    }
}

impl Classifier for HybridTree {
    fn predict(&self, x: &[f64]) -> usize {
        let (leaf, _) = self.shallow.route(x);
        self.extenders[leaf].predict(x)
    }
}

/// Fraction of samples where the shallow tree and the hybrid agree.
pub fn agreement_rate(hybrid: &HybridTree, ds: &Dataset) -> f64 {
    let agreeing = (0..ds.n())
        .filter(|&i| hybrid.shallow.predict(ds.row(i)) == hybrid.predict(ds.row(i)))
        .count();
    agreeing as f64 / ds.n() as f64
}

/// Samples with a class that appears fewer than this many times in a leaf
/// force the fixed single-tree extender instead of a search.
const MIN_CLASS_SAMPLES: usize = 3;

/// Extends every leaf of a reduced tree with its own model.
///
/// Per leaf: a leaf whose samples all carry the leaf class keeps the
/// majority extender; a leaf where some present class has fewer than 3
/// samples gets the fixed single-tree model; any other leaf runs
/// `iterations` random configurations under `folds`-fold cross-validation
/// and refits the winner on the whole leaf. An extender that scores below
/// the leaf's majority rate on the leaf's own training samples is replaced
/// by the majority class, so the hybrid never loses to the shallow tree on
/// training data.
pub fn extend_tree(
    shallow: &ShallowTree,
    train: &Dataset,
    iterations: usize,
    folds: usize,
    seed: u64,
) -> Result<HybridTree> {
    if iterations < 1 || folds < 2 {
        return Err(Error::InvalidConfig(
            "extension needs at least 1 search iteration and 2 folds".into(),
        ));
    }
    let leaf_classes = shallow.leaf_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); leaf_classes.len()];
    for i in 0..train.n() {
        let (leaf, _) = shallow.route(train.row(i));
        members[leaf].push(i);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::InvalidConfig(format!(
            "leaf {empty} receives no training samples; reduce the tree first"
        )));
    }

    let extenders: Result<Vec<LeafExtender>> = members
        .par_iter()
        .enumerate()
        .map(|(leaf, indices)| {
            // Independent stream per leaf, so parallel scheduling cannot
            // change results.
            let leaf_seed = seed ^ (leaf as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            Ok(extend_leaf(
                train,
                indices,
                leaf_classes[leaf],
                iterations,
                folds,
                leaf_seed,
            ))
        })
        .collect();

    Ok(HybridTree {
        shallow: shallow.clone(),
        extenders: extenders?,
    })
}

fn extend_leaf(
    train: &Dataset,
    indices: &[usize],
    leaf_class: usize,
    iterations: usize,
    folds: usize,
    leaf_seed: u64,
) -> LeafExtender {
    let counts = {
        let mut counts = vec![0usize; train.k()];
        for &i in indices {
            counts[train.label(i)] += 1;
        }
        counts
    };
    let (majority_class, majority_count) = counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (class, &count)| {
            if count > best.1 {
                (class, count)
            } else {
                best
            }
        });
    if counts[leaf_class] == indices.len() {
        return LeafExtender::Majority { class: leaf_class };
    }

    let leaf_data = train.subset(indices);
    let thin = counts.iter().any(|&c| 0 < c && c < MIN_CLASS_SAMPLES);
    let candidate = if thin {
        LeafExtender::SingleTree(gbdt_train(&leaf_data, &GbdtConfig::single_tree(), leaf_seed))
    } else {
        let scored: Vec<(f64, GbdtConfig)> = (0..iterations)
            .into_par_iter()
            .map(|iter| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(leaf_seed ^ (iter as u64).wrapping_mul(0x517C_C1B7_2722_0A95));
                let cfg = GbdtConfig::sample(&mut rng);
                let score = cross_validate(&leaf_data, &cfg, folds, &mut rng);
                (score, cfg)
            })
            .collect();
        let best = scored
            .iter()
            .fold(&scored[0], |best, item| if item.0 > best.0 { item } else { best });
        LeafExtender::Gbdt(gbdt_train(&leaf_data, &best.1, leaf_seed))
    };

    // Majority fallback: an extender that cannot beat the constant majority
    // prediction on its own training samples is not worth keeping.
    let trained_correct = indices
        .iter()
        .filter(|&&i| candidate.predict(train.row(i)) == train.label(i))
        .count();
    if trained_correct < majority_count {
        LeafExtender::Majority {
            class: majority_class,
        }
    } else {
        candidate
    }
}

/// Mean validation accuracy over shuffled contiguous folds; datasets too
/// small for the requested fold count fall back to one 80/20 holdout.
fn cross_validate(data: &Dataset, cfg: &GbdtConfig, folds: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = if n < 2 * folds {
        let holdout = (n / 5).max(1);
        vec![(
            order[..n - holdout].to_vec(),
            order[n - holdout..].to_vec(),
        )]
    } else {
        (0..folds)
            .map(|f| {
                let lo = f * n / folds;
                let hi = (f + 1) * n / folds;
                let val = order[lo..hi].to_vec();
                let mut fit = order[..lo].to_vec();
                fit.extend_from_slice(&order[hi..]);
                (fit, val)
            })
            .collect()
    };
    let mut total = 0.0;
    for (fit, val) in &splits {
        let model = gbdt_train(&data.subset(fit), cfg, rng.gen());
        let correct = val
            .iter()
            .filter(|&&i| model.predict(data.row(i)) == data.label(i))
            .count();
        total += correct as f64 / val.len() as f64;
    }
    total / splits.len() as f64
}
