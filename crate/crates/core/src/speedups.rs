//! Optional model strengtheners: lexicographic symmetry breaking over the
//! candidate policies, a cheaper variant for unit-simplex recourse sets, and
//! the greedy policy-freezing heuristic.

use crate::milp::{LinExpr, MilpModel, Relation, VarId};
use crate::model::{DdidInstance, SolverOptions};

use crate::kadapt::{KAdaptError, KAdaptSolution};

/// General symmetry breaking: policies are constrained to be lexicographically
/// decreasing. Adds (K-1) * N_y auxiliary difference binaries `z` with their
/// four defining rows, then the lexicographic rows
/// `y_i^k >= y_i^{k+1} - sum_{i'<i} z_{i'}^{k,k+1}`.
/// The optimal value is unchanged; only permuted duplicates are cut off.
pub fn add_symmetry_breaking(model: &mut MilpModel, policy_vars: &[Vec<VarId>]) {
    let k = policy_vars.len();
    if k < 2 {
        return;
    }
    let n_y = policy_vars[0].len();
    for kk in 0..k - 1 {
        let mut z_row: Vec<VarId> = Vec::with_capacity(n_y);
        for i in 0..n_y {
            let z = model.add_binary(format!("zdiff{}_{}[{i}]", kk + 1, kk + 2));
            let ya = policy_vars[kk][i];
            let yb = policy_vars[kk + 1][i];
            // z <= ya + yb ; z <= 2 - ya - yb ; z >= ya - yb ; z >= yb - ya
            model.add_constraint(vec![(z, 1.0), (ya, -1.0), (yb, -1.0)], Relation::Le, 0.0);
            model.add_constraint(vec![(z, 1.0), (ya, 1.0), (yb, 1.0)], Relation::Le, 2.0);
            model.add_constraint(vec![(z, 1.0), (ya, -1.0), (yb, 1.0)], Relation::Ge, 0.0);
            model.add_constraint(vec![(z, 1.0), (ya, 1.0), (yb, -1.0)], Relation::Ge, 0.0);
            z_row.push(z);
        }
        for i in 0..n_y {
            let mut row = LinExpr::new();
            row.add_term(policy_vars[kk][i], 1.0);
            row.add_term(policy_vars[kk + 1][i], -1.0);
            for &z in &z_row[..i] {
                row.add_term(z, 1.0);
            }
            model.add_constraint_expr(row, Relation::Ge, 0.0);
        }
    }
}

/// Specialized symmetry breaking when the recourse set is the unit simplex
/// (single-item recommendation): duplicate policies are excluded outright via
/// `sum_k y_i^k <= 1` and the lexicographic rows need no auxiliary binaries.
/// Requires K <= N_y.
pub fn add_pe_symmetry_breaking(model: &mut MilpModel, policy_vars: &[Vec<VarId>]) {
    let k = policy_vars.len();
    if k < 2 {
        return;
    }
    let n_y = policy_vars[0].len();
    debug_assert!(k <= n_y);
    for i in 0..n_y {
        let row: Vec<(VarId, f64)> = policy_vars.iter().map(|yk| (yk[i], 1.0)).collect();
        model.add_constraint(row, Relation::Le, 1.0);
    }
    for kk in 0..k - 1 {
        for i in 0..n_y {
            let mut row = LinExpr::new();
            row.add_term(policy_vars[kk][i], 1.0);
            row.add_term(policy_vars[kk + 1][i], -1.0);
            for i2 in 0..i {
                row.add_term(policy_vars[kk][i2], 1.0);
                row.add_term(policy_vars[kk + 1][i2], 1.0);
            }
            model.add_constraint_expr(row, Relation::Ge, 0.0);
        }
    }
}

/// Picks the specialized rows when the recourse set is the unit simplex and K
/// permits, the general rows otherwise.
pub(crate) fn add_auto_symmetry_breaking(
    model: &mut MilpModel,
    canon: &DdidInstance,
    policy_vars: &[Vec<VarId>],
) {
    let k = policy_vars.len();
    if is_unit_simplex(&canon.set_y) && k <= canon.n_y() {
        add_pe_symmetry_breaking(model, policy_vars);
    } else {
        add_symmetry_breaking(model, policy_vars);
    }
}

pub(crate) fn is_unit_simplex(set: &crate::model::BinaryFeasibleSet) -> bool {
    set.constraints.len() == 1 && {
        let c = &set.constraints[0];
        c.relation == Relation::Eq && (c.rhs - 1.0).abs() < 1e-12 && c.coeffs.iter().all(|&x| (x - 1.0).abs() < 1e-12)
    }
}

/// Membership test for the lexicographic-decreasing order enforced by
/// [`add_symmetry_breaking`].
pub fn is_lex_decreasing(policies: &[Vec<u8>]) -> bool {
    policies.windows(2).all(|p| p[0] >= p[1])
}

/// Greedy heuristic: solves the k-adaptability problem for k = 1..K, each
/// round freezing the previously found policies, and returns the K-th
/// solution. Feasible but potentially suboptimal; the value is non-increasing
/// in k by construction.
pub fn greedy_solve(inst: &DdidInstance, k: usize, opts: &SolverOptions) -> Result<KAdaptSolution, KAdaptError> {
    if k == 0 {
        return Err(KAdaptError::Rejected("K must be at least 1".into()));
    }
    let mut frozen: Vec<Vec<u8>> = Vec::new();
    let mut last = None;
    for kk in 1..=k {
        let sol = crate::kadapt::objective::solve_kadapt_objective_frozen(inst, kk, opts, &frozen)?;
        if sol.status != crate::milp::SolveStatus::Optimal {
            return Ok(sol);
        }
        frozen = sol.policies.clone();
        last = Some(sol);
    }
    Ok(last.expect("k >= 1"))
}

/// Greedy heuristic for the piecewise-linear (regret) objective, built on the
/// column-and-constraint generation solver with frozen policies.
pub fn greedy_solve_pwl(
    inst: &DdidInstance,
    pwl: &crate::kadapt::pwl::PwlObjective,
    k: usize,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    if k == 0 {
        return Err(KAdaptError::Rejected("K must be at least 1".into()));
    }
    let mut frozen: Vec<Vec<u8>> = Vec::new();
    let mut last = None;
    for kk in 1..=k {
        let (sol, _) = crate::kadapt::ccg::ccg_solve_frozen(inst, pwl, kk, opts, &frozen)?;
        if sol.status != crate::milp::SolveStatus::Optimal {
            return Ok(sol);
        }
        frozen = sol.policies.clone();
        last = Some(sol);
    }
    Ok(last.expect("k >= 1"))
}
