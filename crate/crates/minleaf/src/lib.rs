//! Shallow axis-aligned decision trees optimized for the *worst* leaf.
//!
//! The usual accuracy objective lets a tree hide a terrible leaf behind a few
//! excellent ones. This crate trains depth-bounded trees that maximize the
//! minimum per-leaf accuracy instead, so every segment the tree carves out is
//! trustworthy on its own. The pieces:
//!
//! * [`data`]: CSV loading, min-max normalization, categorical encodings,
//!   seeded train/test splits and the per-feature resolution vector used by
//!   the optimization model.
//! * [`tree`]: the shallow tree type, routing, per-leaf statistics, tree
//!   reduction and Graphviz export.
//! * [`cart`]: a Gini CART trainer with cost-complexity pruning and a random
//!   hyperparameter search, used as baseline and warmstart source.
//! * [`mio`]: an exact mixed-integer formulation of the problem, exported in
//!   CPLEX LP format for external solvers, with solution verification,
//!   warmstart construction and tree extraction.
//! * [`search`]: a native exact branch-and-bound solver for the same problem,
//!   plus a brute-force oracle for cross-checking.
//! * [`boost`]: a small gradient-boosted tree learner and the per-leaf hybrid
//!   extension that boosts each leaf of a reduced shallow tree.
//! * [`eval`]: a benchmarking harness with paired significance tests.

pub mod boost;
pub mod cart;
pub mod data;
mod error;
pub mod eval;
pub mod mio;
pub mod search;
pub mod tree;

pub use error::{Error, Result};
