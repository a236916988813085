//! Mixed-integer formulation of the worst-leaf training problem.
//!
//! [`build_mio`] lays out the complete depth-`d` tree and produces a linear
//! model over binary routing, leaf-activation, class-assignment and
//! feature-selection variables, plus continuous thresholds. The model is not
//! solved here; it is exported in CPLEX LP format ([`emit_lp`]) for an
//! external solver, and solutions come back as name/value assignments that
//! can be verified ([`check_feasible`]) and turned into trees
//! ([`extract_tree`]). [`warmstart_from_tree`] goes the other way, embedding
//! an existing tree as a feasible starting point.
//!
//! Two objectives are supported. `LeafAccuracy` maximizes a single variable
//! `Q` that every occupied leaf's accuracy bounds from above; per-sample
//! mass variables make each assigned sample of leaf `t` weigh `1/|X_t|`, so
//! the correct mass of a leaf equals its accuracy. `Misclassification` is
//! the classical baseline: maximize the number of correctly classified
//! samples, with per-sample correctness indicators only.
//!
//! Routing needs care at split boundaries. A branch sends a sample right
//! when `x[j] >= b` and left when `x[j] < b`; to keep the left case strict
//! with continuous `b`, the left constraint shifts each feature by its
//! resolution `eps[j]` (the smallest gap between two of its distinct
//! values), and `1 + eps_max` serves as a tight big-M for deactivated
//! routing constraints.

mod lp;
mod solution;

pub use lp::{emit_lp, parse_lp};
pub use solution::{
    check_feasible, extract_tree, load_solution, warmstart_from_tree, Assignment,
    FeasTolerances, FeasibilityReport, Violation,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EpsilonVector};
use crate::error::{Error, Result};
use crate::tree::TreeTopology;

/// Which quantity the model maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximize the minimum per-leaf accuracy over occupied leaves.
    LeafAccuracy,
    /// Minimize total misclassification, expressed as maximizing the number
    /// of correctly classified samples.
    Misclassification,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::LeafAccuracy => "leaf_accuracy",
            Objective::Misclassification => "misclassification",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaf_accuracy" | "leaf-accuracy" => Ok(Objective::LeafAccuracy),
            "misclassification" => Ok(Objective::Misclassification),
            other => Err(Error::InvalidConfig(format!(
                "unknown objective {other:?}; expected \"leaf_accuracy\" or \"misclassification\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MioVariable {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// One row of the model: `sum(coef * var) sense rhs`. Terms reference
/// variable positions in [`MioModel::variables`] and never carry a zero
/// coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub id: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Instance dimensions the model was built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelMeta {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub depth: usize,
    pub n_min: usize,
    pub objective: Objective,
}

/// A maximization model plus the instance metadata needed to interpret its
/// variables. Variables are sorted by name and constraints by id, so two
/// models built from the same instance compare equal structurally.
#[derive(Debug, Clone, PartialEq)]
pub struct MioModel {
    pub meta: ModelMeta,
    /// Coefficients of the maximized linear objective.
    pub objective_terms: Vec<(usize, f64)>,
    pub variables: Vec<MioVariable>,
    pub constraints: Vec<LinearConstraint>,
}

impl MioModel {
    /// Position of a variable, by name.
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.variables
            .binary_search_by(|v| v.name.as_str().cmp(name))
            .ok()
    }

    pub fn topology(&self) -> TreeTopology {
        TreeTopology::new(self.meta.depth)
    }
}

/// Canonical variable names: indices are zero-based, leaves are numbered
/// left to right, branch nodes breadth-first from the root.
pub(crate) mod names {
    /// Sample `i` is routed to leaf `t`.
    pub fn assign(i: usize, t: usize) -> String {
        format!("z_{i}_{t}")
    }
    /// Per-sample mass of sample `i` in leaf `t` (1/|leaf| when assigned).
    pub fn mass(i: usize, t: usize) -> String {
        format!("s_{i}_{t}")
    }
    /// Correct mass of sample `i` in leaf `t`.
    pub fn correct(i: usize, t: usize) -> String {
        format!("S_{i}_{t}")
    }
    /// Shared per-sample mass of leaf `t`.
    pub fn leaf_mass(t: usize) -> String {
        format!("r_{t}")
    }
    /// Leaf `t` is occupied.
    pub fn occupied(t: usize) -> String {
        format!("l_{t}")
    }
    /// Leaf `t` is labeled with class `k`.
    pub fn class(k: usize, t: usize) -> String {
        format!("c_{k}_{t}")
    }
    /// Branch `m` splits on feature `j`.
    pub fn feature(j: usize, m: usize) -> String {
        format!("a_{j}_{m}")
    }
    /// Threshold of branch `m`.
    pub fn threshold(m: usize) -> String {
        format!("b_{m}")
    }
    pub const OBJECTIVE: &str = "Q";
}

struct ModelBuilder {
    variables: Vec<MioVariable>,
    constraints: Vec<(String, Vec<(String, f64)>, Sense, f64)>,
}

impl ModelBuilder {
    fn new() -> Self {
        ModelBuilder {
            variables: Vec::new(),
            constraints: Vec::new(),
        }
    }

    fn binary(&mut self, name: String) {
        self.variables.push(MioVariable {
            name,
            kind: VarKind::Binary,
            lo: 0.0,
            hi: 1.0,
        });
    }

    fn continuous(&mut self, name: String, lo: f64, hi: f64) {
        self.variables.push(MioVariable {
            name,
            kind: VarKind::Continuous,
            lo,
            hi,
        });
    }

    fn constraint(&mut self, id: String, terms: Vec<(String, f64)>, sense: Sense, rhs: f64) {
        let terms = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        self.constraints.push((id, terms, sense, rhs));
    }

    fn finish(mut self, meta: ModelMeta, objective: Vec<(String, f64)>) -> MioModel {
        self.variables.sort_by(|a, b| a.name.cmp(&b.name));
        let index = |name: &str| -> usize {
            self.variables
                .binary_search_by(|v| v.name.as_str().cmp(name))
                .unwrap_or_else(|_| panic!("unknown variable {name}"))
        };
        let mut constraints: Vec<LinearConstraint> = self
            .constraints
            .into_iter()
            .map(|(id, terms, sense, rhs)| LinearConstraint {
                id,
                terms: terms.iter().map(|(n, c)| (index(n), *c)).collect(),
                sense,
                rhs,
            })
            .collect();
        constraints.sort_by(|a, b| a.id.cmp(&b.id));
        MioModel {
            meta,
            objective_terms: objective.iter().map(|(n, c)| (index(n), *c)).collect(),
            variables: self.variables,
            constraints,
        }
    }
}

/// Builds the exact model for `train` at the given depth and minimum leaf
/// size. `eps` must be the resolution vector of the same data.
pub fn build_mio(
    train: &Dataset,
    eps: &EpsilonVector,
    depth: usize,
    n_min: usize,
    objective: Objective,
) -> Result<MioModel> {
    if depth < 1 || depth > 10 {
        return Err(Error::InvalidConfig(format!(
            "model depth {depth} out of range 1..=10"
        )));
    }
    if n_min < 1 {
        return Err(Error::InvalidConfig("n_min must be at least 1".into()));
    }
    if n_min > train.n() {
        return Err(Error::MinLeafTooLarge {
            n_min,
            n: train.n(),
        });
    }
    if eps.as_slice().len() != train.p() {
        return Err(Error::InvalidConfig(
            "resolution vector does not match the dataset".into(),
        ));
    }

    let n = train.n();
    let p = train.p();
    let k = train.k();
    let topo = TreeTopology::new(depth);
    let leaves = topo.leaf_count();
    let branches = topo.branch_count();
    let eps_max = eps.max();

    let mut b = ModelBuilder::new();

    for t in 0..leaves {
        b.binary(names::occupied(t));
        for i in 0..n {
            b.binary(names::assign(i, t));
        }
        for c in 0..k {
            b.binary(names::class(c, t));
        }
    }
    for m in 0..branches {
        for j in 0..p {
            b.binary(names::feature(j, m));
        }
        b.continuous(names::threshold(m), 0.0, 1.0);
    }
    match objective {
        Objective::LeafAccuracy => {
            b.continuous(names::OBJECTIVE.to_string(), 0.0, 1.0);
            for t in 0..leaves {
                b.continuous(names::leaf_mass(t), 0.0, 1.0);
                for i in 0..n {
                    b.continuous(names::mass(i, t), 0.0, 1.0);
                    b.continuous(names::correct(i, t), 0.0, 1.0);
                }
            }
        }
        Objective::Misclassification => {
            for t in 0..leaves {
                for i in 0..n {
                    b.binary(names::correct(i, t));
                }
            }
        }
    }

    // Structural constraints shared by both objectives.
    for i in 0..n {
        b.constraint(
            format!("assign_{i}"),
            (0..leaves).map(|t| (names::assign(i, t), 1.0)).collect(),
            Sense::Eq,
            1.0,
        );
    }
    for t in 0..leaves {
        let mut terms: Vec<(String, f64)> =
            (0..k).map(|c| (names::class(c, t), 1.0)).collect();
        terms.push((names::occupied(t), -1.0));
        b.constraint(format!("class_pick_{t}"), terms, Sense::Eq, 0.0);

        let mut terms: Vec<(String, f64)> =
            (0..n).map(|i| (names::assign(i, t), 1.0)).collect();
        terms.push((names::occupied(t), -(n_min as f64)));
        b.constraint(format!("min_size_{t}"), terms, Sense::Ge, 0.0);

        for i in 0..n {
            b.constraint(
                format!("occupied_{i}_{t}"),
                vec![(names::assign(i, t), 1.0), (names::occupied(t), -1.0)],
                Sense::Le,
                0.0,
            );
        }
    }
    // Each branch picks exactly one feature; routing along every root-leaf
    // path is enforced sample by sample, with the constraint released by the
    // big-M when the sample is not assigned below that branch edge.
    for m in 0..branches {
        b.constraint(
            format!("feature_{m}"),
            (0..p).map(|j| (names::feature(j, m), 1.0)).collect(),
            Sense::Eq,
            1.0,
        );
    }
    for t in 0..leaves {
        for m in topo.right_ancestors(t) {
            for i in 0..n {
                let mut terms: Vec<(String, f64)> = (0..p)
                    .map(|j| (names::feature(j, m), train.value(i, j)))
                    .collect();
                terms.push((names::threshold(m), -1.0));
                terms.push((names::assign(i, t), -1.0));
                b.constraint(format!("route_r_{i}_{t}_{m}"), terms, Sense::Ge, -1.0);
            }
        }
        for m in topo.left_ancestors(t) {
            for i in 0..n {
                let mut terms: Vec<(String, f64)> = (0..p)
                    .map(|j| (names::feature(j, m), train.value(i, j) + eps.feature(j)))
                    .collect();
                terms.push((names::threshold(m), -1.0));
                terms.push((names::assign(i, t), 1.0 + eps_max));
                b.constraint(
                    format!("route_l_{i}_{t}_{m}"),
                    terms,
                    Sense::Le,
                    1.0 + eps_max,
                );
            }
        }
    }

    let objective_terms: Vec<(String, f64)> = match objective {
        Objective::LeafAccuracy => {
            // Q is dominated by each occupied leaf's correct mass; the mass
            // variables share one value per leaf and sum to 1 there, which
            // pins them to 1/|leaf| and makes correct mass equal accuracy.
            for t in 0..leaves {
                let mut terms: Vec<(String, f64)> = vec![
                    (names::OBJECTIVE.to_string(), 1.0),
                    (names::occupied(t), 1.0),
                ];
                terms.extend((0..n).map(|i| (names::correct(i, t), -1.0)));
                b.constraint(format!("min_acc_{t}"), terms, Sense::Le, 1.0);

                let mut terms: Vec<(String, f64)> =
                    (0..n).map(|i| (names::mass(i, t), 1.0)).collect();
                terms.push((names::occupied(t), -1.0));
                b.constraint(format!("mass_{t}"), terms, Sense::Eq, 0.0);

                for i in 0..n {
                    b.constraint(
                        format!("mass_ub_{i}_{t}"),
                        vec![(names::mass(i, t), 1.0), (names::assign(i, t), -1.0)],
                        Sense::Le,
                        0.0,
                    );
                    b.constraint(
                        format!("share_ub_{i}_{t}"),
                        vec![
                            (names::leaf_mass(t), 1.0),
                            (names::mass(i, t), -1.0),
                            (names::assign(i, t), 1.0),
                        ],
                        Sense::Le,
                        1.0,
                    );
                    b.constraint(
                        format!("share_lb_{i}_{t}"),
                        vec![
                            (names::leaf_mass(t), 1.0),
                            (names::mass(i, t), -1.0),
                            (names::assign(i, t), -1.0),
                        ],
                        Sense::Ge,
                        -1.0,
                    );
                    b.constraint(
                        format!("correct_mass_{i}_{t}"),
                        vec![(names::correct(i, t), 1.0), (names::mass(i, t), -1.0)],
                        Sense::Le,
                        0.0,
                    );
                    b.constraint(
                        format!("correct_class_{i}_{t}"),
                        vec![
                            (names::correct(i, t), 1.0),
                            (names::class(train.label(i), t), -1.0),
                        ],
                        Sense::Le,
                        0.0,
                    );
                    b.constraint(
                        format!("correct_lb_{i}_{t}"),
                        vec![
                            (names::correct(i, t), 1.0),
                            (names::mass(i, t), -1.0),
                            (names::class(train.label(i), t), -1.0),
                        ],
                        Sense::Ge,
                        -1.0,
                    );
                }
            }
            vec![(names::OBJECTIVE.to_string(), 1.0)]
        }
        Objective::Misclassification => {
            let mut objective = Vec::with_capacity(n * leaves);
            for t in 0..leaves {
                for i in 0..n {
                    b.constraint(
                        format!("correct_assign_{i}_{t}"),
                        vec![(names::correct(i, t), 1.0), (names::assign(i, t), -1.0)],
                        Sense::Le,
                        0.0,
                    );
                    b.constraint(
                        format!("correct_class_{i}_{t}"),
                        vec![
                            (names::correct(i, t), 1.0),
                            (names::class(train.label(i), t), -1.0),
                        ],
                        Sense::Le,
                        0.0,
                    );
                    objective.push((names::correct(i, t), 1.0));
                }
            }
            objective
        }
    };

    let meta = ModelMeta {
        n,
        p,
        k,
        depth,
        n_min,
        objective,
    };
    Ok(b.finish(meta, objective_terms))
}
