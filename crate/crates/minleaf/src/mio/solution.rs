//! Solution files, feasibility checking, warmstarts, and tree extraction.
//!
//! The toolkit never solves the integer program itself. Instead it writes LP
//! files, and an external solver writes back a plain text solution: one
//! `name value` pair per line, `#` starting a comment. The functions here
//! close the loop in both directions: a trained tree becomes a complete
//! feasible assignment (a warmstart for the solver), and a solver assignment
//! becomes a tree.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::{compute_epsilon, Dataset};
use crate::error::{Error, Result};
use crate::mio::{names, MioModel, Objective, Sense, VarKind};
use crate::tree::{ShallowTree, TreeNode, TreeTopology};

/// A variable assignment keyed by variable name.
///
/// Backed by an ordered map so that iteration and serialization are
/// deterministic regardless of insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment(BTreeMap<String, f64>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(name, &value)| (name.as_str(), value))
    }

    /// Names present here but absent from the model, sorted.
    pub fn unknown_names(&self, model: &MioModel) -> Vec<String> {
        self.0
            .keys()
            .filter(|name| model.var_index(name).is_none())
            .cloned()
            .collect()
    }

    /// Renders the assignment in the same format [`load_solution`] reads.
    pub fn to_solution_text(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(comment) = comment {
            for line in comment.lines() {
                out.push_str("# ");
                out.push_str(line);
                out.push('\n');
            }
        }
        for (name, value) in &self.0 {
            out.push_str(name);
            out.push(' ');
            out.push_str(&format!("{value}"));
            out.push('\n');
        }
        out
    }
}

/// Parses solution text: `name value` per line, `#` comments, no duplicates.
pub fn parse_solution(text: &str) -> Result<Assignment> {
    let mut assignment = Assignment::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let (Some(name), Some(value)) = (parts.next(), parts.next()) else {
            return Err(Error::SolutionFormat {
                line,
                message: format!("expected \"name value\", found {content:?}"),
            });
        };
        if let Some(extra) = parts.next() {
            return Err(Error::SolutionFormat {
                line,
                message: format!("unexpected trailing token {extra:?}"),
            });
        }
        let value: f64 = value.parse().map_err(|_| Error::SolutionFormat {
            line,
            message: format!("{value:?} is not a number"),
        })?;
        if assignment.get(name).is_some() {
            return Err(Error::SolutionFormat {
                line,
                message: format!("duplicate variable {name:?}"),
            });
        }
        assignment.set(name, value);
    }
    Ok(assignment)
}

/// Reads a solution file from disk.
pub fn load_solution(path: impl AsRef<Path>) -> Result<Assignment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_solution(&text)
}

/// Tolerances for [`check_feasible`].
#[derive(Debug, Clone, Copy)]
pub struct FeasTolerances {
    /// Allowed slack on constraints and variable bounds.
    pub constraint: f64,
    /// Allowed distance from an integer for binary variables.
    pub integrality: f64,
}

impl Default for FeasTolerances {
    fn default() -> Self {
        Self {
            constraint: 1e-6,
            integrality: 1e-4,
        }
    }
}

/// A single constraint, bound, or integrality violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Constraint id, or `bound_<name>` / `integrality_<name>`.
    pub id: String,
    /// How far past the tolerance-free limit the assignment sits.
    pub amount: f64,
}

/// Outcome of verifying an assignment against a model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// Objective value of the assignment, reported even when infeasible.
    pub objective: f64,
    pub violations: Vec<Violation>,
}

/// Verifies an assignment against every bound, integrality requirement, and
/// constraint of the model. The assignment must cover all model variables.
pub fn check_feasible(
    model: &MioModel,
    assignment: &Assignment,
    tol: FeasTolerances,
) -> Result<FeasibilityReport> {
    let mut values = Vec::with_capacity(model.variables.len());
    for var in &model.variables {
        let value = assignment
            .get(&var.name)
            .ok_or_else(|| Error::MissingVariable(var.name.clone()))?;
        values.push(value);
    }

    let mut violations = Vec::new();
    for (var, &value) in model.variables.iter().zip(&values) {
        if value < var.lo - tol.constraint {
            violations.push(Violation {
                id: format!("bound_{}", var.name),
                amount: var.lo - value,
            });
        } else if value > var.hi + tol.constraint {
            violations.push(Violation {
                id: format!("bound_{}", var.name),
                amount: value - var.hi,
            });
        }
        if var.kind == VarKind::Binary {
            let distance = (value - value.round()).abs();
            if distance > tol.integrality {
                violations.push(Violation {
                    id: format!("integrality_{}", var.name),
                    amount: distance,
                });
            }
        }
    }
    for constraint in &model.constraints {
        let lhs: f64 = constraint
            .terms
            .iter()
            .map(|&(var, coef)| coef * values[var])
            .sum();
        let excess = match constraint.sense {
            Sense::Le => lhs - constraint.rhs,
            Sense::Ge => constraint.rhs - lhs,
            Sense::Eq => (lhs - constraint.rhs).abs(),
        };
        if excess > tol.constraint {
            violations.push(Violation {
                id: constraint.id.clone(),
                amount: excess,
            });
        }
    }

    let objective = model
        .objective_terms
        .iter()
        .map(|&(var, coef)| coef * values[var])
        .sum();
    Ok(FeasibilityReport {
        feasible: violations.is_empty(),
        objective,
        violations,
    })
}

/// Encodes a trained tree as a complete feasible assignment for the model.
///
/// Branch thresholds are shifted into the window the routing constraints
/// leave between the two sides of the split, branches the tree does not use
/// are fixed to a pass-through split (feature 0, threshold 0, so everything
/// routes right), and the objective variables are set to the values the tree
/// actually achieves on `train`.
pub fn warmstart_from_tree(
    model: &MioModel,
    tree: &ShallowTree,
    train: &Dataset,
) -> Result<Assignment> {
    let meta = &model.meta;
    if train.n() != meta.n || train.p() != meta.p || train.k() != meta.k {
        return Err(Error::InvalidConfig(format!(
            "dataset ({} samples, {} features, {} classes) does not match the model \
             ({}, {}, {})",
            train.n(),
            train.p(),
            train.k(),
            meta.n,
            meta.p,
            meta.k
        )));
    }
    if tree.depth() > meta.depth {
        return Err(Error::DepthExceeded {
            tree_depth: tree.depth(),
            model_depth: meta.depth,
        });
    }

    let topo = model.topology();
    let eps = compute_epsilon(train);
    let mut assignment = Assignment::new();
    for var in &model.variables {
        assignment.set(var.name.clone(), 0.0);
    }
    for m in 0..topo.branch_count() {
        assignment.set(names::feature(0, m), 1.0);
        assignment.set(names::threshold(m), 0.0);
    }

    let mut leaves: Vec<Option<(usize, Vec<usize>)>> = vec![None; topo.leaf_count()];
    let all: Vec<usize> = (0..train.n()).collect();
    embed(
        &tree.root,
        0,
        0,
        all,
        meta.depth,
        train,
        &eps,
        &mut assignment,
        &mut leaves,
    )?;

    let mut min_share: f64 = 1.0;
    for (t, slot) in leaves.iter().enumerate() {
        let Some((class, indices)) = slot else {
            continue;
        };
        if indices.is_empty() {
            continue;
        }
        if indices.len() < meta.n_min {
            return Err(Error::LeafBelowMinSize {
                leaf: t,
                count: indices.len(),
                n_min: meta.n_min,
            });
        }
        assignment.set(names::occupied(t), 1.0);
        assignment.set(names::class(*class, t), 1.0);
        let share = 1.0 / indices.len() as f64;
        let mut correct = 0usize;
        for &i in indices {
            let hit = train.label(i) == *class;
            correct += hit as usize;
            assignment.set(names::assign(i, t), 1.0);
            match meta.objective {
                Objective::LeafAccuracy => {
                    assignment.set(names::mass(i, t), share);
                    if hit {
                        assignment.set(names::correct(i, t), share);
                    }
                }
                Objective::Misclassification => {
                    if hit {
                        assignment.set(names::correct(i, t), 1.0);
                    }
                }
            }
        }
        if meta.objective == Objective::LeafAccuracy {
            assignment.set(names::leaf_mass(t), share);
            min_share = min_share.min(correct as f64 / indices.len() as f64);
        }
    }
    if meta.objective == Objective::LeafAccuracy {
        assignment.set(names::OBJECTIVE, min_share);
    }
    Ok(assignment)
}

/// Writes the branch at `(level, offset)` and recurses. Samples reaching a
/// leaf node above the bottom level are parked in the rightmost leaf below
/// it; the pass-through defaults already route them there.
#[allow(clippy::too_many_arguments)]
fn embed(
    node: &TreeNode,
    level: usize,
    offset: usize,
    indices: Vec<usize>,
    depth: usize,
    train: &Dataset,
    eps: &crate::data::EpsilonVector,
    assignment: &mut Assignment,
    leaves: &mut [Option<(usize, Vec<usize>)>],
) -> Result<()> {
    match node {
        TreeNode::Leaf { class } => {
            let below = depth - level;
            let t = (offset + 1) * (1 << below) - 1;
            leaves[t] = Some((*class, indices));
            Ok(())
        }
        TreeNode::Branch {
            feature,
            threshold,
            left,
            right,
        } => {
            if level >= depth {
                return Err(Error::DepthExceeded {
                    tree_depth: level + node.depth(),
                    model_depth: depth,
                });
            }
            if *feature >= train.p() {
                return Err(Error::InvalidConfig(format!(
                    "tree splits on feature {feature} but the model has {} features",
                    train.p()
                )));
            }
            let m = (1 << level) - 1 + offset;
            let (mut lo, mut hi) = (Vec::new(), Vec::new());
            for &i in &indices {
                if train.value(i, *feature) < *threshold {
                    lo.push(i);
                } else {
                    hi.push(i);
                }
            }
            // The routing constraints accept a threshold b only when every
            // left sample has x + eps <= b and every right sample has x >= b.
            let lower = lo
                .iter()
                .map(|&i| train.value(i, *feature))
                .fold(f64::NEG_INFINITY, f64::max)
                + eps.feature(*feature);
            let lower = if lo.is_empty() { 0.0 } else { lower };
            let upper = if hi.is_empty() {
                1.0
            } else {
                hi.iter()
                    .map(|&i| train.value(i, *feature))
                    .fold(f64::INFINITY, f64::min)
            };
            if !threshold.is_finite() || lower > upper {
                return Err(Error::ThresholdNotRepresentable {
                    node: m,
                    feature: *feature,
                    threshold: *threshold,
                });
            }
            assignment.set(names::feature(0, m), 0.0);
            assignment.set(names::feature(*feature, m), 1.0);
            assignment.set(names::threshold(m), threshold.clamp(lower, upper));
            embed(left, level + 1, 2 * offset, lo, depth, train, eps, assignment, leaves)?;
            embed(right, level + 1, 2 * offset + 1, hi, depth, train, eps, assignment, leaves)
        }
    }
}

/// Decodes an assignment into the complete tree it describes.
///
/// Each branch takes its highest-weight feature indicator and raw threshold;
/// each leaf takes its highest-weight class indicator, or class 0 when the
/// leaf is marked unoccupied. Callers typically reduce the result against
/// the training data afterwards.
pub fn extract_tree(model: &MioModel, assignment: &Assignment) -> Result<ShallowTree> {
    let meta = &model.meta;
    let topo = TreeTopology::new(meta.depth);
    let need = |name: String| -> Result<f64> {
        assignment
            .get(&name)
            .ok_or(Error::MissingVariable(name))
    };

    let mut features = Vec::with_capacity(topo.branch_count());
    let mut thresholds = Vec::with_capacity(topo.branch_count());
    for m in 0..topo.branch_count() {
        let mut best = (0usize, f64::NEG_INFINITY);
        for j in 0..meta.p {
            let weight = need(names::feature(j, m))?;
            if weight > best.1 {
                best = (j, weight);
            }
        }
        features.push(best.0);
        thresholds.push(need(names::threshold(m))?);
    }
    let mut classes = Vec::with_capacity(topo.leaf_count());
    for t in 0..topo.leaf_count() {
        if need(names::occupied(t))? < 0.5 {
            classes.push(0);
            continue;
        }
        let mut best = (0usize, f64::NEG_INFINITY);
        for k in 0..meta.k {
            let weight = need(names::class(k, t))?;
            if weight > best.1 {
                best = (k, weight);
            }
        }
        classes.push(best.0);
    }

    fn build(
        level: usize,
        offset: usize,
        depth: usize,
        features: &[usize],
        thresholds: &[f64],
        classes: &[usize],
    ) -> TreeNode {
        if level == depth {
            return TreeNode::leaf(classes[offset]);
        }
        let m = (1 << level) - 1 + offset;
        TreeNode::branch(
            features[m],
            thresholds[m],
            build(level + 1, 2 * offset, depth, features, thresholds, classes),
            build(level + 1, 2 * offset + 1, depth, features, thresholds, classes),
        )
    }
    Ok(ShallowTree::new(build(
        0,
        0,
        meta.depth,
        &features,
        &thresholds,
        &classes,
    )))
}
