//! Greedy Gini tree induction with cost-complexity pruning.
//!
//! This is the classical baseline the exact methods are compared against,
//! and also the source of warmstart trees. Growth is best-first by weighted
//! impurity decrease, which makes `max_leaf_nodes` meaningful and reduces to
//! ordinary full growth when no leaf budget is set. Candidate thresholds are
//! midpoints between consecutive distinct feature values within a node.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tree::{model_accuracy, ShallowTree, TreeNode};

/// Growth and pruning parameters, mirroring the usual CART controls.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CartConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_leaf_nodes: Option<usize>,
    /// Minimum weighted impurity decrease `(n_node/n) * (gini - split gini)`
    /// required to split.
    pub min_impurity_decrease: f64,
    /// Weakest-link pruning strength; risk is the training misclassification
    /// count, so a branch is kept only when collapsing it would cost at least
    /// `ccp_alpha` misclassifications per removed leaf. Zero disables pruning.
    pub ccp_alpha: f64,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig {
            max_depth: 4,
            min_samples_leaf: 50,
            min_samples_split: 2,
            max_leaf_nodes: None,
            min_impurity_decrease: 0.0,
            ccp_alpha: 0.0,
        }
    }
}

impl CartConfig {
    /// Default controls at a given tree size.
    pub fn at(max_depth: usize, min_samples_leaf: usize) -> Self {
        CartConfig {
            max_depth,
            min_samples_leaf,
            ..CartConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidConfig("min_samples_split must be at least 2".into()));
        }
        if let Some(m) = self.max_leaf_nodes {
            if m < 2 {
                return Err(Error::InvalidConfig("max_leaf_nodes must be at least 2".into()));
            }
        }
        if self.min_impurity_decrease < 0.0 || self.ccp_alpha < 0.0 {
            return Err(Error::InvalidConfig(
                "min_impurity_decrease and ccp_alpha must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

struct GrowNode {
    indices: Vec<usize>,
    depth: usize,
    counts: Vec<usize>,
    children: Option<(usize, f64, usize, usize)>,
}

impl GrowNode {
    fn majority(&self) -> usize {
        // Ties resolve to the lowest class index.
        let mut best = 0;
        for (c, &n) in self.counts.iter().enumerate() {
            if n > self.counts[best] {
                best = c;
            }
        }
        best
    }

    fn misclassified(&self) -> usize {
        self.indices.len() - self.counts[self.majority()]
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let sq: f64 = counts
        .iter()
        .map(|&c| {
            let f = c as f64 / total as f64;
            f * f
        })
        .sum();
    1.0 - sq
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best Gini split of a node, by weighted impurity decrease; ties go to the
/// lowest (feature, threshold). Returns None when no split satisfies the
/// size constraints or clears `min_impurity_decrease`.
fn best_split(ds: &Dataset, indices: &[usize], cfg: &CartConfig, n_total: usize) -> Option<SplitChoice> {
    let n = indices.len();
    let k = ds.k();
    let mut counts = vec![0usize; k];
    for &i in indices {
        counts[ds.label(i)] += 1;
    }
    let node_gini = gini(&counts, n);
    if node_gini == 0.0 {
        return None;
    }
    let weight = n as f64 / n_total as f64;
    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = indices.to_vec();
    for j in 0..ds.p() {
        order.sort_by(|&a, &b| ds.value(a, j).partial_cmp(&ds.value(b, j)).unwrap());
        let mut left = vec![0usize; k];
        let mut left_n = 0usize;
        for w in 0..n - 1 {
            let i = order[w];
            left[ds.label(i)] += 1;
            left_n += 1;
            let v = ds.value(i, j);
            let next = ds.value(order[w + 1], j);
            if next <= v {
                continue;
            }
            let right_n = n - left_n;
            if left_n < cfg.min_samples_leaf || right_n < cfg.min_samples_leaf {
                continue;
            }
            let right: Vec<usize> = counts.iter().zip(&left).map(|(&c, &l)| c - l).collect();
            let split_gini = (left_n as f64 / n as f64) * gini(&left, left_n)
                + (right_n as f64 / n as f64) * gini(&right, right_n);
            let gain = weight * (node_gini - split_gini);
            if gain <= 0.0 || gain < cfg.min_impurity_decrease {
                continue;
            }
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: j,
                    threshold: (v + next) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

/// Trains a Gini CART tree, then applies weakest-link cost-complexity
/// pruning with `cfg.ccp_alpha`. Deterministic in its inputs.
pub fn cart_train(train: &Dataset, cfg: &CartConfig) -> Result<ShallowTree> {
    cfg.validate()?;
    let n = train.n();
    let k = train.k();
    let count_of = |indices: &[usize]| {
        let mut counts = vec![0usize; k];
        for &i in indices {
            counts[train.label(i)] += 1;
        }
        counts
    };

    let mut arena: Vec<GrowNode> = vec![GrowNode {
        indices: (0..n).collect(),
        depth: 0,
        counts: count_of(&(0..n).collect::<Vec<_>>()),
        children: None,
    }];
    // Frontier of splittable leaves with their precomputed best split.
    let mut frontier: Vec<(usize, SplitChoice)> = Vec::new();
    let eligible = |node: &GrowNode| {
        node.depth < cfg.max_depth && node.indices.len() >= cfg.min_samples_split
    };
    if eligible(&arena[0]) {
        if let Some(split) = best_split(train, &arena[0].indices, cfg, n) {
            frontier.push((0, split));
        }
    }
    let mut leaves = 1usize;
    let budget = cfg.max_leaf_nodes.unwrap_or(usize::MAX);
    while leaves < budget {
        // Best-first: largest gain wins, earliest node breaks ties.
        let Some(pos) = frontier
            .iter()
            .enumerate()
            .max_by(|(ai, (an, a)), (bi, (bn, b))| {
                a.gain
                    .partial_cmp(&b.gain)
                    .unwrap()
                    .then(bn.cmp(an))
                    .then(bi.cmp(ai))
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let (node_idx, split) = frontier.swap_remove(pos);
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = arena[node_idx]
            .indices
            .iter()
            .partition(|&&i| train.value(i, split.feature) < split.threshold);
        let depth = arena[node_idx].depth + 1;
        for indices in [left_idx, right_idx] {
            let counts = count_of(&indices);
            let child = GrowNode {
                indices,
                depth,
                counts,
                children: None,
            };
            let idx = arena.len();
            if eligible(&child) {
                if let Some(split) = best_split(train, &child.indices, cfg, n) {
                    frontier.push((idx, split));
                }
            }
            arena.push(child);
        }
        arena[node_idx].children = Some((
            split.feature,
            split.threshold,
            arena.len() - 2,
            arena.len() - 1,
        ));
        leaves += 1;
    }

    prune_weakest_links(&mut arena, cfg.ccp_alpha);

    fn build(arena: &[GrowNode], idx: usize) -> TreeNode {
        match arena[idx].children {
            None => TreeNode::leaf(arena[idx].majority()),
            Some((feature, threshold, l, r)) => TreeNode::branch(
                feature,
                threshold,
                build(arena, l),
                build(arena, r),
            ),
        }
    }
    Ok(ShallowTree::new(build(&arena, 0)))
}

/// Collapses, one at a time, the internal node whose subtree saves the
/// fewest misclassifications per leaf, while that rate is below `alpha`.
fn prune_weakest_links(arena: &mut [GrowNode], alpha: f64) {
    if alpha <= 0.0 {
        return;
    }
    loop {
        // (risk as leaf - subtree risk) / (subtree leaves - 1) per internal node.
        fn subtree(arena: &[GrowNode], idx: usize) -> (usize, usize) {
            match arena[idx].children {
                None => (arena[idx].misclassified(), 1),
                Some((_, _, l, r)) => {
                    let (lr, ll) = subtree(arena, l);
                    let (rr, rl) = subtree(arena, r);
                    (lr + rr, ll + rl)
                }
            }
        }
        let mut weakest: Option<(usize, f64)> = None;
        for idx in 0..arena.len() {
            if arena[idx].children.is_none() {
                continue;
            }
            let (risk, leaves) = subtree(arena, idx);
            let g = (arena[idx].misclassified() - risk) as f64 / (leaves - 1) as f64;
            if weakest.map_or(true, |(_, wg)| g < wg) {
                weakest = Some((idx, g));
            }
        }
        match weakest {
            Some((idx, g)) if g < alpha => arena[idx].children = None,
            _ => return,
        }
    }
}

/// Search-space distributions for [`cart_search`]: depth and leaf size stay
/// fixed, the regularizers are drawn fresh each iteration.
fn sample_config(base: &CartConfig, rng: &mut ChaCha8Rng) -> CartConfig {
    CartConfig {
        max_depth: base.max_depth,
        min_samples_leaf: base.min_samples_leaf,
        min_samples_split: rng.gen_range(2..=100),
        max_leaf_nodes: Some(rng.gen_range(2..=16)),
        min_impurity_decrease: rng.gen::<f64>() * 0.2,
        ccp_alpha: rng.gen::<f64>() * 0.3,
    }
}

/// Outcome of the random hyperparameter search.
#[derive(Debug, Clone)]
pub struct CartSearchResult {
    pub tree: ShallowTree,
    pub config: CartConfig,
    /// Mean validation accuracy of the winning configuration.
    pub cv_accuracy: f64,
    /// Folds actually used; 1 means the single-split fallback was taken
    /// because some class had fewer samples than requested folds.
    pub cv_folds: usize,
}

/// Random hyperparameter search for CART: `iterations` configurations are
/// scored by `folds`-fold cross-validated accuracy and the best one is refit
/// on all of `train`. Ties keep the earliest configuration, so a fixed seed
/// reproduces both the winner and the tree.
pub fn cart_search(
    train: &Dataset,
    base: &CartConfig,
    iterations: usize,
    folds: usize,
    seed: u64,
) -> Result<CartSearchResult> {
    if iterations == 0 || folds < 2 {
        return Err(Error::InvalidConfig(
            "cart_search needs at least one iteration and two folds".into(),
        ));
    }
    let n = train.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        shuffled.swap(i, j);
    }

    // With too few samples of some class for proper folds, fall back to one
    // 80/20 train/validation split.
    let fallback = n < 2 * folds || train.class_counts().iter().any(|&c| c < folds);
    let plan: Vec<(Dataset, Dataset)> = if fallback {
        let val_size = (n / 5).max(1);
        let val = train.subset(&shuffled[..val_size]);
        let fit = train.subset(&shuffled[val_size..]);
        vec![(fit, val)]
    } else {
        (0..folds)
            .map(|f| {
                let lo = f * n / folds;
                let hi = (f + 1) * n / folds;
                let val = train.subset(&shuffled[lo..hi]);
                let fit: Vec<usize> = shuffled[..lo]
                    .iter()
                    .chain(&shuffled[hi..])
                    .copied()
                    .collect();
                (train.subset(&fit), val)
            })
            .collect()
    };

    let mut best: Option<(CartConfig, f64)> = None;
    for _ in 0..iterations {
        let cfg = sample_config(base, &mut rng);
        let mut score = 0.0;
        for (fit, val) in &plan {
            let tree = cart_train(fit, &cfg)?;
            score += model_accuracy(&tree, val);
        }
        score /= plan.len() as f64;
        if best.as_ref().map_or(true, |(_, s)| score > *s) {
            best = Some((cfg, score));
        }
    }
    let (config, cv_accuracy) = best.unwrap();
    let tree = cart_train(train, &config)?;
    Ok(CartSearchResult {
        tree,
        config,
        cv_accuracy,
        cv_folds: plan.len(),
    })
}
