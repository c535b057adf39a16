//! Column-and-constraint generation for piecewise-linear convex objectives.
//!
//! The relaxed master is the monolithic model restricted to an active set of
//! piece-index tuples (initially the all-ones tuple). A feasibility problem
//! prices the master's first-stage decisions exactly; whenever its value
//! exceeds the master bound, the maximizing tuple is added and the loop
//! repeats. Lower bounds are monotone and the loop stops once the gap closes
//! to `ccg_delta`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::milp::{solve_milp, LinExpr, MilpModel, Relation, SolveStatus, VarId};
use crate::model::{DdidInstance, SolverOptions};

use super::pwl::{
    build_pwl_model, build_pwl_model_for_tuples, enumerate_piece_tuples, regret_host, PieceIndex,
    PwlObjective,
};
use super::{extract_binary, extract_w, KAdaptError, KAdaptSolution, SolveMethod};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcgIteration {
    pub iter: usize,
    /// Master value tau (lower bound).
    pub lower: f64,
    /// Feasibility value theta (value of the master's decisions).
    pub upper: f64,
    pub added: Option<PieceIndex>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcgState {
    pub active_indices: Vec<PieceIndex>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub iterations: Vec<CcgIteration>,
}

/// Builds the feasibility problem for fixed decisions: maximize the smallest
/// per-policy piece value theta over scenarios consistent with `w`, with
/// piece-selection binaries picking each policy's active piece.
pub fn build_ccg_feasibility(
    inst: &DdidInstance,
    pwl: &PwlObjective,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<MilpModel, KAdaptError> {
    let canon = regret_host(inst)?;
    Ok(build_feasibility_model(&canon, pwl, x, w, policies, opts)?.0)
}

struct FeasVarMap {
    theta: VarId,
    xi_k: Vec<Vec<VarId>>,
}

fn build_feasibility_model(
    canon: &DdidInstance,
    pwl: &PwlObjective,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<(MilpModel, FeasVarMap), KAdaptError> {
    let k = policies.len();
    let n_pieces = pwl.num_pieces();
    let bounds = canon.xi.coordinate_bounds(opts).map_err(KAdaptError::Uncertainty)?;

    // Piece value ranges over the uncertainty set, by interval arithmetic on
    // the coordinate bound boxes; they give tight per-piece big-Ms.
    let mut piece_ranges: Vec<Vec<(f64, f64)>> = Vec::with_capacity(k);
    for y in policies {
        let mut per_piece = Vec::with_capacity(n_pieces);
        for p in 0..n_pieces {
            let coeffs = pwl.piece_coeffs(p, x, w, y);
            let (mut lo, mut hi) = (0.0, 0.0);
            for (c, &(bl, bh)) in coeffs.iter().zip(&bounds) {
                lo += (c * bl).min(c * bh);
                hi += (c * bl).max(c * bh);
            }
            per_piece.push((lo, hi));
        }
        piece_ranges.push(per_piece);
    }

    let mut m = MilpModel::new();
    let theta = m.add_continuous("theta", f64::NEG_INFINITY, f64::INFINITY);
    let xi_bar = super::add_xi_vars(&mut m, canon, "_bar");
    let mut xi_k = Vec::with_capacity(k);
    for kk in 0..k {
        let xk = super::add_xi_vars(&mut m, canon, &format!("_{kk}"));
        for i in 0..canon.n_xi() {
            if w[i] == 1 {
                m.add_constraint(vec![(xk[i], 1.0), (xi_bar[i], -1.0)], Relation::Eq, 0.0);
            }
        }
        xi_k.push(xk);
    }

    for kk in 0..k {
        let eta = m.add_continuous(format!("eta[{kk}]"), f64::NEG_INFINITY, f64::INFINITY);
        m.add_constraint(vec![(theta, 1.0), (eta, -1.0)], Relation::Le, 0.0);
        let zeta: Vec<VarId> = (0..n_pieces).map(|p| m.add_binary(format!("zeta{kk}[{p}]"))).collect();
        m.add_constraint(zeta.iter().map(|&z| (z, 1.0)).collect(), Relation::Eq, 1.0);
        let max_hi = piece_ranges[kk].iter().fold(f64::NEG_INFINITY, |a, &(_, h)| a.max(h));
        for p in 0..n_pieces {
            let coeffs = pwl.piece_coeffs(p, x, w, &policies[kk]);
            // eta >= piece value
            let mut lo_row = LinExpr::term(eta, 1.0);
            for (i, c) in coeffs.iter().enumerate() {
                lo_row.add_term(xi_k[kk][i], -c);
            }
            m.add_constraint_expr(lo_row, Relation::Ge, 0.0);
            // eta <= piece value + M (1 - zeta_p)
            let big_m = (max_hi - piece_ranges[kk][p].0).max(0.0) + 1.0;
            let mut hi_row = LinExpr::term(eta, 1.0);
            for (i, c) in coeffs.iter().enumerate() {
                hi_row.add_term(xi_k[kk][i], -c);
            }
            hi_row.add_term(zeta[p], big_m);
            m.add_constraint_expr(hi_row, Relation::Le, big_m);
        }
    }
    m.set_objective(vec![(theta, -1.0)], 0.0);
    Ok((m, FeasVarMap { theta, xi_k }))
}

/// Exact worst-case piecewise value of fixed decisions (the feasibility
/// problem's optimum). Small piece families are evaluated by one epigraph LP
/// per index tuple; larger ones through the mixed-binary feasibility model.
/// Returns the value and the lexicographically lowest maximizing tuple.
pub fn evaluate_pwl_fixed_with_tuple(
    canon: &DdidInstance,
    pwl: &PwlObjective,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<(f64, PieceIndex), KAdaptError> {
    let k = policies.len();
    match enumerate_piece_tuples(pwl.num_pieces(), k, opts.piece_cap) {
        Ok(tuples) => {
            let mut best = f64::NEG_INFINITY;
            let mut best_tuple = tuples[0].clone();
            for tuple in &tuples {
                let mut m = MilpModel::new();
                let tau = m.add_continuous("tau", f64::NEG_INFINITY, f64::INFINITY);
                let xi_bar = super::add_xi_vars(&mut m, canon, "_bar");
                for kk in 0..k {
                    let xk = super::add_xi_vars(&mut m, canon, &format!("_{kk}"));
                    for i in 0..canon.n_xi() {
                        if w[i] == 1 {
                            m.add_constraint(vec![(xk[i], 1.0), (xi_bar[i], -1.0)], Relation::Eq, 0.0);
                        }
                    }
                    let coeffs = pwl.piece_coeffs(tuple.i[kk], x, w, &policies[kk]);
                    let mut row = LinExpr::term(tau, 1.0);
                    for (i, c) in coeffs.iter().enumerate() {
                        row.add_term(xk[i], -c);
                    }
                    m.add_constraint_expr(row, Relation::Le, 0.0);
                }
                m.set_objective(vec![(tau, -1.0)], 0.0);
                let sol = crate::milp::solve_lp(&m, opts)?;
                if sol.status != SolveStatus::Optimal {
                    return Err(KAdaptError::LpFailed(sol.status));
                }
                let v = -sol.value;
                if v > best + 1e-12 {
                    best = v;
                    best_tuple = tuple.clone();
                }
            }
            Ok((best, best_tuple))
        }
        Err(_) => {
            // Too many tuples to enumerate: use the mixed-binary model and
            // derive the tuple from the scenario the solver found.
            let (model, map) = build_feasibility_model(canon, pwl, x, w, policies, opts)?;
            let sol = solve_milp(&model, opts)?;
            if sol.status != SolveStatus::Optimal {
                return Err(KAdaptError::LpFailed(sol.status));
            }
            let theta = sol.primal[map.theta];
            let tuple = derive_tuple(canon, pwl, x, w, policies, &sol.primal, &map);
            Ok((theta, tuple))
        }
    }
}

/// Value-only variant of [`evaluate_pwl_fixed_with_tuple`].
pub fn evaluate_pwl_fixed(
    canon: &DdidInstance,
    pwl: &PwlObjective,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<f64, KAdaptError> {
    evaluate_pwl_fixed_with_tuple(canon, pwl, x, w, policies, opts).map(|(v, _)| v)
}

/// Lowest-index maximizing piece per policy at the solver's scenario; any
/// maximizing choice certifies the infeasible subproblem, so the tie-break
/// only fixes which index is added.
fn derive_tuple(
    canon: &DdidInstance,
    pwl: &PwlObjective,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    primal: &[f64],
    map: &FeasVarMap,
) -> PieceIndex {
    let _ = canon;
    let mut tuple = Vec::with_capacity(policies.len());
    for (kk, y) in policies.iter().enumerate() {
        let xi: Vec<f64> = map.xi_k[kk].iter().map(|&v| primal[v]).collect();
        let mut best = f64::NEG_INFINITY;
        let mut best_p = 0;
        for p in 0..pwl.num_pieces() {
            let v = crate::matrix::dot(&pwl.piece_coeffs(p, x, w, y), &xi);
            if v > best + 1e-9 {
                best = v;
                best_p = p;
            }
        }
        tuple.push(best_p);
    }
    PieceIndex { i: tuple }
}

/// Solves the monolithic piecewise-linear model; above the variable cap the
/// solver enumerates first-stage decisions and prices them exactly.
pub fn solve_pwl_monolithic(
    inst: &DdidInstance,
    pwl: &PwlObjective,
    k: usize,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    let canon = regret_host(inst)?;
    let (model, map) = build_pwl_model(&canon, pwl, k, opts)?;
    if model.num_vars() <= opts.milp_var_cap {
        let milp = solve_milp(&model, opts)?;
        match milp.status {
            SolveStatus::Optimal | SolveStatus::LimitReached if !milp.primal.is_empty() => {}
            SolveStatus::Infeasible => return Ok(KAdaptSolution::infeasible(&canon, k, SolveMethod::Mblp)),
            s => {
                let mut out = KAdaptSolution::infeasible(&canon, k, SolveMethod::Mblp);
                out.status = s;
                out.nodes = milp.nodes;
                return Ok(out);
            }
        }
        let p = &milp.primal;
        let warnings = crate::milp::binding_big_m_report(&model, p, map.big_m, opts.lp_feas_tol);
        Ok(KAdaptSolution {
            status: milp.status,
            value: milp.value,
            x: extract_binary(p, &map.stage.x),
            w: extract_w(p, &map.stage.w),
            policies: map.stage.policies.iter().map(|ids| extract_binary(p, ids)).collect(),
            duals: None,
            gap: milp.gap,
            nodes: milp.nodes,
            method: SolveMethod::Mblp,
            warnings,
        })
    } else {
        solve_pwl_by_enumeration(&canon, pwl, k, opts)
    }
}

fn solve_pwl_by_enumeration(
    canon: &DdidInstance,
    pwl: &PwlObjective,
    k: usize,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    let crate::model::RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constant rhs required".into()));
    };
    let xs = crate::oracles::enumerate_members(&canon.set_x, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let ws = crate::oracles::enumerate_members(&canon.set_w, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let ys = crate::oracles::enumerate_members(&canon.set_y, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let mut best: Option<(f64, Vec<u8>, Vec<u8>, Vec<Vec<u8>>)> = None;
    for x in &xs {
        for w in &ws {
            let feasible: Vec<&Vec<u8>> = ys
                .iter()
                .filter(|y| {
                    canon.stage_lhs(x, w, y).iter().zip(h).all(|(lhs, rhs)| *lhs <= rhs + opts.lp_feas_tol)
                })
                .collect();
            if feasible.is_empty() {
                continue;
            }
            let subset = k.min(feasible.len());
            for combo in crate::oracles::combinations(feasible.len(), subset) {
                let mut policies: Vec<Vec<u8>> = combo.iter().map(|&i| feasible[i].clone()).collect();
                while policies.len() < k {
                    policies.push(policies.last().unwrap().clone());
                }
                let v = evaluate_pwl_fixed(canon, pwl, x, w, &policies, opts)?;
                if best.as_ref().map_or(true, |(bv, ..)| v < bv - 1e-12) {
                    best = Some((v, x.clone(), w.clone(), policies));
                }
            }
        }
    }
    let Some((value, x, w, policies)) = best else {
        return Ok(KAdaptSolution::infeasible(canon, k, SolveMethod::Enumeration));
    };
    Ok(KAdaptSolution {
        status: SolveStatus::Optimal,
        value,
        x,
        w,
        policies,
        duals: None,
        gap: 0.0,
        nodes: 0,
        method: SolveMethod::Enumeration,
        warnings: Vec::new(),
    })
}

/// Column-and-constraint generation: alternates the relaxed master over the
/// active tuple set with the exact feasibility evaluation, adding the
/// maximizing tuple while the gap exceeds `ccg_delta`. The returned value is
/// the feasibility value `theta` of the final decisions, within `ccg_delta`
/// of the optimum.
pub fn ccg_solve(
    inst: &DdidInstance,
    pwl: &PwlObjective,
    k: usize,
    opts: &SolverOptions,
) -> Result<(KAdaptSolution, CcgState), KAdaptError> {
    ccg_solve_frozen(inst, pwl, k, opts, &[])
}

pub(crate) fn ccg_solve_frozen(
    inst: &DdidInstance,
    pwl: &PwlObjective,
    k: usize,
    opts: &SolverOptions,
    frozen: &[Vec<u8>],
) -> Result<(KAdaptSolution, CcgState), KAdaptError> {
    let canon = regret_host(inst)?;
    opts.validate().map_err(KAdaptError::BadOptions)?;
    if k == 0 {
        return Err(KAdaptError::Rejected("K must be at least 1".into()));
    }
    let mut build_opts = opts.clone();
    if !frozen.is_empty() {
        build_opts.symmetry_breaking = crate::model::SymmetryMode::Off;
    }
    let delta = opts.ccg_delta;
    let mut state = CcgState {
        active_indices: vec![PieceIndex { i: vec![0; k] }],
        lower_bound: f64::NEG_INFINITY,
        upper_bound: f64::INFINITY,
        iterations: Vec::new(),
    };
    let started = Instant::now();
    let max_iters = opts
        .piece_cap
        .min(pwl.num_pieces().saturating_pow(k as u32).max(1))
        .saturating_add(1);
    let mut warm: Option<Vec<f64>> = None;
    let mut incumbent: Option<KAdaptSolution> = None;

    for iter in 1..=max_iters {
        let iter_start = Instant::now();
        let (mut model, map) = build_pwl_model_for_tuples(&canon, pwl, k, &state.active_indices, &build_opts)?;
        for (kk, y) in frozen.iter().enumerate().take(k) {
            for (j, &yv) in map.stage.policies[kk].iter().enumerate() {
                model.add_constraint(vec![(yv, 1.0)], Relation::Eq, y[j] as f64);
            }
        }
        let master = crate::milp::solve_milp_with_start(&model, opts, warm.as_deref())?;
        match master.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Ok((KAdaptSolution::infeasible(&canon, k, SolveMethod::Mblp), state));
            }
            s => {
                let mut out = incumbent.unwrap_or_else(|| KAdaptSolution::infeasible(&canon, k, SolveMethod::Mblp));
                out.status = s;
                return Ok((out, state));
            }
        }
        let tau = master.value;
        state.lower_bound = tau;
        let x = extract_binary(&master.primal, &map.stage.x);
        let w = extract_w(&master.primal, &map.stage.w);
        let policies: Vec<Vec<u8>> = map.stage.policies.iter().map(|ids| extract_binary(&master.primal, ids)).collect();

        let (theta, tuple) = evaluate_pwl_fixed_with_tuple(&canon, pwl, &x, &w, &policies, opts)?;
        state.upper_bound = theta;
        incumbent = Some(KAdaptSolution {
            status: SolveStatus::Optimal,
            value: theta,
            x,
            w,
            policies,
            duals: None,
            gap: (theta - tau).max(0.0),
            nodes: master.nodes,
            method: SolveMethod::Mblp,
            warnings: Vec::new(),
        });
        warm = Some(master.primal.clone());

        let added = if theta > tau + delta {
            if state.active_indices.contains(&tuple) {
                // The certificate tuple is already active: the gap is purely
                // numerical and cannot be closed by another column.
                let mut out = incumbent.take().unwrap();
                out.status = SolveStatus::LimitReached;
                out.warnings.push(format!(
                    "ccg stalled with duplicate tuple {:?} at gap {:.3e}",
                    tuple.i,
                    theta - tau
                ));
                state.iterations.push(CcgIteration {
                    iter,
                    lower: tau,
                    upper: theta,
                    added: None,
                    wall_ms: iter_start.elapsed().as_secs_f64() * 1e3,
                });
                return Ok((out, state));
            }
            state.active_indices.push(tuple.clone());
            Some(tuple)
        } else {
            None
        };
        state.iterations.push(CcgIteration {
            iter,
            lower: tau,
            upper: theta,
            added: added.clone(),
            wall_ms: iter_start.elapsed().as_secs_f64() * 1e3,
        });
        if theta - tau <= delta {
            break;
        }
        if opts.time_limit > 0 && started.elapsed().as_secs() >= opts.time_limit {
            let mut out = incumbent.take().unwrap();
            out.status = SolveStatus::LimitReached;
            return Ok((out, state));
        }
    }
    Ok((incumbent.expect("at least one iteration"), state))
}
