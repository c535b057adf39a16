//! Best-first branch-and-bound over binary variables.
//!
//! Branching picks the most-fractional binary (ties to the lowest variable
//! index), nodes are explored in bound order (ties to the oldest node), and
//! pruning uses the absolute tolerance `lp_opt_tol`. The search is fully
//! deterministic for a fixed model and option set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::simplex::{solve_lp_with_overrides, SimplexLimits};
use super::{lp_limits, MilpError, MilpModel, MilpSolution, SolveStatus, VarKind};
use crate::model::SolverOptions;

/// Environment variable capping branch-and-bound nodes (useful in CI).
pub const NODE_LIMIT_ENV: &str = "DDID_NODE_LIMIT";

struct Node {
    bound: f64,
    id: u64,
    fixings: Vec<(usize, f64)>,
    relax: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so the lowest bound (oldest id on ties)
    // pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn solve_milp(model: &MilpModel, opts: &SolverOptions) -> Result<MilpSolution, MilpError> {
    solve_milp_with_start(model, opts, None)
}

/// Branch-and-bound with an optional warm-start assignment whose binary
/// entries seed the incumbent.
pub fn solve_milp_with_start(
    model: &MilpModel,
    opts: &SolverOptions,
    start: Option<&[f64]>,
) -> Result<MilpSolution, MilpError> {
    model_validate(model)?;
    let limits = lp_limits(opts);
    let nv = model.variables.len();
    let binaries: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter_map(|(j, v)| (v.kind == VarKind::Binary).then_some(j))
        .collect();

    let node_limit = effective_node_limit(opts);
    let deadline = (opts.time_limit > 0).then(|| Instant::now() + std::time::Duration::from_secs(opts.time_limit));

    let free = vec![(f64::NEG_INFINITY, f64::INFINITY); nv];
    let mut nodes_solved = 0usize;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    if let Some(s) = start {
        if s.len() == nv {
            let mut ov = free.clone();
            for &j in &binaries {
                let v = if s[j] >= 0.5 { 1.0 } else { 0.0 };
                ov[j] = (v, v);
            }
            let sol = solve_lp_with_overrides(model, Some(&ov), &limits);
            nodes_solved += 1;
            if sol.status == SolveStatus::Optimal {
                incumbent = Some((sol.value, sol.primal));
            }
        }
    }

    let root = solve_lp_with_overrides(model, Some(&free), &limits);
    nodes_solved += 1;
    match root.status {
        SolveStatus::Infeasible => {
            return Ok(finish(model, opts, &limits, incumbent, f64::INFINITY, nodes_solved, SolveStatus::Infeasible));
        }
        SolveStatus::Unbounded => {
            return Ok(MilpSolution {
                status: SolveStatus::Unbounded,
                value: f64::NEG_INFINITY,
                primal: Vec::new(),
                gap: f64::INFINITY,
                nodes: nodes_solved,
            });
        }
        SolveStatus::LimitReached | SolveStatus::NumericalBreakdown => {
            return Ok(MilpSolution {
                status: root.status,
                value: f64::INFINITY,
                primal: Vec::new(),
                gap: f64::INFINITY,
                nodes: nodes_solved,
            });
        }
        SolveStatus::Optimal => {}
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    heap.push(Node { bound: root.value, id: next_id, fixings: Vec::new(), relax: root.primal });

    let mut limit_hit = false;
    let mut best_open = root.value;

    while let Some(node) = heap.pop() {
        best_open = node.bound;
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - opts.lp_opt_tol {
                best_open = node.bound;
                break;
            }
        }
        if nodes_solved >= node_limit || deadline.map_or(false, |d| Instant::now() >= d) {
            limit_hit = true;
            break;
        }

        let branch = pick_branching(&binaries, &node.relax, opts.integrality_tol);
        let Some(bvar) = branch else {
            // Integral relaxation: candidate incumbent.
            if incumbent.as_ref().map_or(true, |(inc, _)| node.bound < inc - 1e-12) {
                incumbent = Some((node.bound, node.relax.clone()));
            }
            continue;
        };

        for val in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((bvar, val));
            let mut ov = free.clone();
            for &(j, v) in &fixings {
                ov[j] = (v, v);
            }
            let sol = solve_lp_with_overrides(model, Some(&ov), &limits);
            nodes_solved += 1;
            match sol.status {
                SolveStatus::Optimal => {
                    let dominated = incumbent
                        .as_ref()
                        .map_or(false, |(inc, _)| sol.value >= inc - opts.lp_opt_tol);
                    if dominated {
                        continue;
                    }
                    if pick_branching(&binaries, &sol.primal, opts.integrality_tol).is_none() {
                        if incumbent.as_ref().map_or(true, |(inc, _)| sol.value < inc - 1e-12) {
                            incumbent = Some((sol.value, sol.primal));
                        }
                    } else {
                        next_id += 1;
                        heap.push(Node { bound: sol.value, id: next_id, fixings, relax: sol.primal });
                    }
                }
                SolveStatus::Infeasible => {}
                SolveStatus::Unbounded => {
                    return Ok(MilpSolution {
                        status: SolveStatus::Unbounded,
                        value: f64::NEG_INFINITY,
                        primal: Vec::new(),
                        gap: f64::INFINITY,
                        nodes: nodes_solved,
                    });
                }
                SolveStatus::LimitReached | SolveStatus::NumericalBreakdown => {
                    return Ok(MilpSolution {
                        status: sol.status,
                        value: incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v),
                        primal: incumbent.map(|(_, p)| p).unwrap_or_default(),
                        gap: f64::INFINITY,
                        nodes: nodes_solved,
                    });
                }
            }
        }
        if heap.is_empty() {
            best_open = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        }
    }

    if limit_hit {
        let gap = match &incumbent {
            Some((inc, _)) => (inc - best_open).max(0.0),
            None => f64::INFINITY,
        };
        let (value, primal) = incumbent.map_or((f64::INFINITY, Vec::new()), |(v, p)| (v, p));
        return Ok(MilpSolution { status: SolveStatus::LimitReached, value, primal, gap, nodes: nodes_solved });
    }

    let status = if incumbent.is_some() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
    Ok(finish(model, opts, &limits, incumbent, best_open, nodes_solved, status))
}

fn finish(
    model: &MilpModel,
    opts: &SolverOptions,
    limits: &SimplexLimits,
    incumbent: Option<(f64, Vec<f64>)>,
    best_open: f64,
    nodes: usize,
    status: SolveStatus,
) -> MilpSolution {
    let Some((value, primal)) = incumbent else {
        return MilpSolution { status, value: f64::INFINITY, primal: Vec::new(), gap: 0.0, nodes };
    };
    // Clean pass: re-solve with binaries pinned to their rounded values so the
    // reported continuous part (products, duals blocks) is exact.
    let mut ov = vec![(f64::NEG_INFINITY, f64::INFINITY); model.variables.len()];
    for (j, v) in model.variables.iter().enumerate() {
        if v.kind == VarKind::Binary {
            let b = if primal[j] >= 0.5 { 1.0 } else { 0.0 };
            ov[j] = (b, b);
        }
    }
    let polished = solve_lp_with_overrides(model, Some(&ov), limits);
    let (value, primal) = if polished.status == SolveStatus::Optimal && polished.value <= value + opts.lp_opt_tol {
        (polished.value, polished.primal)
    } else {
        (value, primal)
    };
    let gap = if best_open.is_finite() { (value - best_open).max(0.0) } else { 0.0 };
    MilpSolution { status: SolveStatus::Optimal, value, primal, gap, nodes }
}

fn pick_branching(binaries: &[usize], point: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let frac = (point[j] - point[j].round()).abs();
        if frac > tol {
            let better = best.map_or(true, |(_, bf)| frac > bf + 1e-15);
            if better {
                best = Some((j, frac));
            }
        }
    }
    best.map(|(j, _)| j)
}

fn effective_node_limit(opts: &SolverOptions) -> usize {
    let env_cap = std::env::var(NODE_LIMIT_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(usize::MAX);
    opts.node_limit.min(env_cap)
}

fn model_validate(model: &MilpModel) -> Result<(), MilpError> {
    // Reuse the shared structural checks.
    model.validate_public()
}

impl MilpModel {
    pub(crate) fn validate_public(&self) -> Result<(), MilpError> {
        self.validate()
    }
}
