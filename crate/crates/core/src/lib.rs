//! Solvers for two- and multi-stage robust optimization with
//! decision-dependent information discovery (DDID).
//!
//! Binary measurement decisions `w` choose which uncertain parameters are
//! revealed between stages; K-adaptability picks `K` candidate recourse
//! policies here-and-now and implements the best one after observation. The
//! crate provides:
//!
//! * [`model`] - instance data types, validation, canonicalization;
//! * [`milp`] - a dense two-phase simplex plus branch-and-bound backend;
//! * [`kadapt`] - K-adaptability reformulations for objective uncertainty,
//!   constraint uncertainty, piecewise-linear convex objectives (monolithic
//!   and column-and-constraint generation), and the multistage variant;
//! * [`oracles`] - brute-force evaluators certifying the reformulations on
//!   small instances;
//! * [`instances`] - preference-elicitation and R&D portfolio builders;
//! * [`speedups`] - symmetry breaking and the greedy heuristic;
//! * [`io`] - JSON instance/solution schemas and CSV helpers.

pub mod instances;
pub mod io;
pub mod kadapt;
pub mod matrix;
pub mod milp;
pub mod model;
pub mod oracles;
pub mod speedups;

pub use matrix::Matrix;
pub use model::{
    BinaryFeasibleSet, DdidInstance, RhsMode, Sense, SolverOptions, SymmetryMode, UncertaintySet,
    ValidationIssue,
};
