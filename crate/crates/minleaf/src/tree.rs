//! Shallow axis-aligned decision trees.
//!
//! Routing convention: a sample descends left when `x[feature] < threshold`
//! and right when `x[feature] >= threshold`, so a value equal to the
//! threshold goes right. The quality measure of interest here is the *leaf
//! accuracy*: the minimum, over all leaves that receive at least one sample,
//! of the fraction of that leaf's samples carrying the leaf's class. Leaves
//! that receive no samples are excluded from the minimum.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// A node of a shallow tree.
///
/// Serializes as `{"branch": {...}}` / `{"leaf": {"class": 0}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Branch {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class: usize,
    },
}

impl TreeNode {
    pub fn leaf(class: usize) -> TreeNode {
        TreeNode::Leaf { class }
    }

    pub fn branch(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> TreeNode {
        TreeNode::Branch {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Branch { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Branch { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// A complete decision tree of bounded depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShallowTree {
    pub root: TreeNode,
}

impl ShallowTree {
    pub fn new(root: TreeNode) -> Self {
        ShallowTree { root }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    /// Routes a sample to its leaf; returns the leaf's identity (depth-first
    /// pre-order position among leaves, left before right) and its class.
    pub fn route(&self, x: &[f64]) -> (usize, usize) {
        let mut node = &self.root;
        let mut leaf_id = 0;
        loop {
            match node {
                TreeNode::Leaf { class } => return (leaf_id, *class),
                TreeNode::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*feature] < *threshold {
                        node = left;
                    } else {
                        leaf_id += left.leaf_count();
                        node = right;
                    }
                }
            }
        }
    }

    /// Classes of all leaves, indexed by leaf identity.
    pub fn leaf_classes(&self) -> Vec<usize> {
        fn collect(node: &TreeNode, out: &mut Vec<usize>) {
            match node {
                TreeNode::Leaf { class } => out.push(*class),
                TreeNode::Branch { left, right, .. } => {
                    collect(left, out);
                    collect(right, out);
                }
            }
        }
        let mut out = Vec::with_capacity(self.leaf_count());
        collect(&self.root, &mut out);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("invalid tree json: {e}")))
    }
}

/// Anything that assigns a class to a feature vector.
pub trait Classifier {
    fn predict(&self, x: &[f64]) -> usize;
}

impl Classifier for ShallowTree {
    fn predict(&self, x: &[f64]) -> usize {
        self.route(x).1
    }
}

/// Sample counts for one leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafStat {
    pub class: usize,
    pub count: usize,
    pub correct: usize,
}

impl LeafStat {
    /// Fraction of this leaf's samples carrying the leaf class, if any arrive.
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }
}

/// Per-leaf statistics of a tree on one dataset, indexed by leaf identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub per_leaf: Vec<LeafStat>,
}

impl LeafStats {
    /// Minimum accuracy over non-empty leaves.
    pub fn leaf_accuracy(&self) -> f64 {
        self.per_leaf
            .iter()
            .filter_map(LeafStat::accuracy)
            .fold(f64::INFINITY, f64::min)
    }

    /// Overall fraction of correctly classified samples.
    pub fn model_accuracy(&self) -> f64 {
        let count: usize = self.per_leaf.iter().map(|s| s.count).sum();
        let correct: usize = self.per_leaf.iter().map(|s| s.correct).sum();
        correct as f64 / count as f64
    }
}

/// Computes the leaf accuracy of `tree` on `ds` along with per-leaf counts.
pub fn leaf_accuracy(tree: &ShallowTree, ds: &Dataset) -> (f64, LeafStats) {
    assert!(ds.n() > 0, "leaf accuracy of an empty dataset is undefined");
    let classes = tree.leaf_classes();
    let mut per_leaf: Vec<LeafStat> = classes
        .iter()
        .map(|&class| LeafStat {
            class,
            count: 0,
            correct: 0,
        })
        .collect();
    for i in 0..ds.n() {
        let (leaf, class) = tree.route(ds.row(i));
        per_leaf[leaf].count += 1;
        per_leaf[leaf].correct += (ds.label(i) == class) as usize;
    }
    let stats = LeafStats { per_leaf };
    (stats.leaf_accuracy(), stats)
}

/// Computes the plain accuracy of any classifier on a dataset.
pub fn model_accuracy<M: Classifier + ?Sized>(model: &M, ds: &Dataset) -> f64 {
    assert!(ds.n() > 0, "accuracy of an empty dataset is undefined");
    let correct = (0..ds.n())
        .filter(|&i| model.predict(ds.row(i)) == ds.label(i))
        .count();
    correct as f64 / ds.n() as f64
}

/// Removes structure the training data cannot justify: branches one of whose
/// sides receives no training samples are replaced by the other side, and
/// sibling leaves of the same class are merged, bottom-up until neither rule
/// applies. Predictions on the training samples are unchanged, so the
/// training leaf accuracy can only improve (merging two leaves of one class
/// pools their counts, which never lowers the minimum), and reducing twice
/// equals reducing once.
pub fn reduce_tree(tree: &ShallowTree, train: &Dataset) -> ShallowTree {
    fn reduce(node: &TreeNode, indices: &[usize], train: &Dataset) -> TreeNode {
        match node {
            TreeNode::Leaf { class } => TreeNode::leaf(*class),
            TreeNode::Branch {
                feature,
                threshold,
                left,
                right,
            } => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|&&i| train.value(i, *feature) < *threshold);
                if left_idx.is_empty() {
                    return reduce(right, indices, train);
                }
                if right_idx.is_empty() {
                    return reduce(left, indices, train);
                }
                let left = reduce(left, &left_idx, train);
                let right = reduce(right, &right_idx, train);
                match (&left, &right) {
                    (TreeNode::Leaf { class: a }, TreeNode::Leaf { class: b }) if a == b => {
                        TreeNode::leaf(*a)
                    }
                    _ => TreeNode::branch(*feature, *threshold, left, right),
                }
            }
        }
    }
    let indices: Vec<usize> = (0..train.n()).collect();
    ShallowTree::new(reduce(&tree.root, &indices, train))
}

/// Index arithmetic for the complete binary tree of a fixed depth: `2^d - 1`
/// branch nodes in breadth-first order (root is node 0) and `2^d` leaves
/// numbered left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeTopology {
    depth: usize,
}

impl TreeTopology {
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1 && depth <= 24, "depth {depth} out of range");
        TreeTopology { depth }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn branch_count(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn leaf_count(&self) -> usize {
        1 << self.depth
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn child(&self, branch: usize, right: bool) -> usize {
        2 * branch + 1 + right as usize
    }

    /// Branch nodes on the path from the root to `leaf`, paired with the
    /// direction taken at each (true = right).
    pub fn path(&self, leaf: usize) -> Vec<(usize, bool)> {
        assert!(leaf < self.leaf_count());
        let mut path = Vec::with_capacity(self.depth);
        let mut node = 0;
        for level in 0..self.depth {
            let right = (leaf >> (self.depth - 1 - level)) & 1 == 1;
            path.push((node, right));
            node = self.child(node, right);
        }
        path
    }

    /// Branch ancestors of `leaf` whose left edge the path follows.
    pub fn left_ancestors(&self, leaf: usize) -> Vec<usize> {
        self.path(leaf)
            .into_iter()
            .filter_map(|(m, right)| (!right).then_some(m))
            .collect()
    }

    /// Branch ancestors of `leaf` whose right edge the path follows.
    pub fn right_ancestors(&self, leaf: usize) -> Vec<usize> {
        self.path(leaf)
            .into_iter()
            .filter_map(|(m, right)| right.then_some(m))
            .collect()
    }

    /// Leaf reached from `branch` by always descending right.
    pub fn rightmost_leaf_below(&self, branch: usize, level: usize) -> usize {
        let mut node = branch;
        for _ in level..self.depth {
            node = self.child(node, true);
        }
        node - self.branch_count()
    }
}

fn escape_html(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_quoted(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

fn percent(stat: &LeafStat) -> String {
    match stat.accuracy() {
        Some(acc) => format!("{:.1}%", 100.0 * acc),
        None => "n/a".to_string(),
    }
}

/// Renders a tree as Graphviz DOT.
///
/// Branch nodes show the feature name with edges labeled `< t` and `>= t`
/// (thresholds to four decimals). Leaves show the class name, the test-set
/// accuracy in bold when test statistics are given, and the training
/// accuracy in regular face, mirroring how the trees are read: the bold
/// figure is the out-of-sample guarantee for that segment.
pub fn export_dot(
    tree: &ShallowTree,
    feature_names: &[String],
    class_names: &[String],
    train_stats: &LeafStats,
    test_stats: Option<&LeafStats>,
) -> String {
    let mut out = String::from("digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    let mut next_id = 0usize;
    let mut leaf_id = 0usize;
    fn walk(
        node: &TreeNode,
        out: &mut String,
        next_id: &mut usize,
        leaf_id: &mut usize,
        feature_names: &[String],
        class_names: &[String],
        train_stats: &LeafStats,
        test_stats: Option<&LeafStats>,
    ) -> usize {
        let id = *next_id;
        *next_id += 1;
        match node {
            TreeNode::Leaf { class } => {
                let train = &train_stats.per_leaf[*leaf_id];
                let mut label = escape_html(&class_names[*class]);
                if let Some(test) = test_stats {
                    label.push_str(&format!("<BR/><B>{}</B>", percent(&test.per_leaf[*leaf_id])));
                }
                label.push_str(&format!("<BR/>{}", percent(train)));
                out.push_str(&format!("  n{id} [label=<{label}>];\n"));
                *leaf_id += 1;
            }
            TreeNode::Branch {
                feature,
                threshold,
                left,
                right,
            } => {
                out.push_str(&format!(
                    "  n{id} [label=\"{}\"];\n",
                    escape_quoted(&feature_names[*feature])
                ));
                let left_id = walk(
                    left,
                    out,
                    next_id,
                    leaf_id,
                    feature_names,
                    class_names,
                    train_stats,
                    test_stats,
                );
                out.push_str(&format!(
                    "  n{id} -> n{left_id} [label=\"< {threshold:.4}\"];\n"
                ));
                let right_id = walk(
                    right,
                    out,
                    next_id,
                    leaf_id,
                    feature_names,
                    class_names,
                    train_stats,
                    test_stats,
                );
                out.push_str(&format!(
                    "  n{id} -> n{right_id} [label=\"&#8805; {threshold:.4}\"];\n"
                ));
            }
        }
        id
    }
    walk(
        &tree.root,
        &mut out,
        &mut next_id,
        &mut leaf_id,
        feature_names,
        class_names,
        train_stats,
        test_stats,
    );
    out.push_str("}\n");
    out
}
