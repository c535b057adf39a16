//! K-adaptability under constraint uncertainty.
//!
//! Nature's choices are covered by a family of sets indexed by a vector `ell`
//! recording, per policy, either feasibility (0) or the first violated
//! second-stage row. Open violation sets are replaced by closed inner
//! approximations with margin `eps`; the resulting model carries one dual
//! block per index with at least one feasible policy and one Farkas
//! infeasibility certificate (`<= -1` row) per all-violating index. The model
//! value is a lower bound on the true K-adaptability value that tightens as
//! `eps` shrinks.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::milp::{
    binding_big_m_report, solve_milp, LinExpr, MilpModel, Relation, SolveStatus, VarId,
};
use crate::model::{DdidInstance, RhsMode, SolverOptions};
use crate::speedups;

use super::{add_stage_vars, add_xi_vars, extract_binary, extract_w, KAdaptError, KAdaptSolution, SolveMethod, StageVars};

/// Per-policy constraint-violation labels: entry k is 0 when policy k is
/// feasible and the (1-based) index of a violated row otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationIndex {
    pub ell: Vec<usize>,
}

impl ViolationIndex {
    /// True when every policy violates some row (the certificate partition).
    pub fn all_violating(&self) -> bool {
        self.ell.iter().all(|&l| l > 0)
    }
}

/// Enumerates {0,...,L}^K in lexicographic order with the partition tag
/// implied by [`ViolationIndex::all_violating`]. Errors when (L+1)^K exceeds
/// the configured cap.
pub fn enumerate_indices(k: usize, l: usize, opts: &SolverOptions) -> Result<Vec<ViolationIndex>, KAdaptError> {
    let base = l + 1;
    let mut total: usize = 1;
    for _ in 0..k {
        total = total
            .checked_mul(base)
            .filter(|&t| t <= opts.index_cap)
            .ok_or_else(|| KAdaptError::IndexCapExceeded(format!("(L+1)^K = {base}^{k} > {}", opts.index_cap)))?;
    }
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0usize; k];
    loop {
        out.push(ViolationIndex { ell: cur.clone() });
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < base {
                break;
            }
            cur[pos] = 0;
            if pos == 0 {
                return Ok(out);
            }
        }
    }
}

struct ProductCache {
    map: HashMap<(VarId, VarId), VarId>,
}

impl ProductCache {
    fn new() -> Self {
        Self { map: HashMap::new() }
    }

    fn get(&mut self, m: &mut MilpModel, z: VarId, c: VarId) -> Result<VarId, KAdaptError> {
        if let Some(&p) = self.map.get(&(z, c)) {
            return Ok(p);
        }
        let (lo, hi) = m.bounds(c);
        let name = format!("p[{}.{}]", z, c);
        let p = m.add_product_bin_cont(name, z, c, lo, hi)?;
        self.map.insert((z, c), p);
        Ok(p)
    }
}

/// `(cons_x x + cons_w w + cons_y y^k)_row * dual` as a linear expression over
/// product variables.
fn stage_row_times_dual(
    m: &mut MilpModel,
    cache: &mut ProductCache,
    inst: &DdidInstance,
    stage: &StageVars,
    kk: usize,
    row: usize,
    dual: VarId,
) -> Result<LinExpr, KAdaptError> {
    let mut expr = LinExpr::new();
    for (j, &xv) in stage.x.iter().enumerate() {
        let c = inst.cons_x[(row, j)];
        if c != 0.0 {
            expr.add_term(cache.get(m, xv, dual)?, c);
        }
    }
    for (i, wv) in stage.w.iter().enumerate() {
        let c = inst.cons_w[(row, i)];
        if c != 0.0 {
            if let Some(wv) = *wv {
                expr.add_term(cache.get(m, wv, dual)?, c);
            }
        }
    }
    for (j, &yv) in stage.policies[kk].iter().enumerate() {
        let c = inst.cons_y[(row, j)];
        if c != 0.0 {
            expr.add_term(cache.get(m, yv, dual)?, c);
        }
    }
    Ok(expr)
}

pub(crate) struct ConstraintVarMap {
    pub stage: StageVars,
    pub big_m: f64,
}

/// Builds the epsilon-approximate MBLP for constraint uncertainty on the
/// canonicalized instance.
pub fn build_kadapt_constraint_mblp(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<MilpModel, KAdaptError> {
    let canon = inst.canonicalize();
    Ok(build_constraint_model(&canon, k, opts)?.0)
}

pub(crate) fn build_constraint_model(
    canon: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<(MilpModel, ConstraintVarMap), KAdaptError> {
    opts.validate().map_err(KAdaptError::BadOptions)?;
    if k == 0 {
        return Err(KAdaptError::Rejected("K must be at least 1".into()));
    }
    let RhsMode::Uncertain(h_mat) = &canon.rhs else {
        return Err(KAdaptError::Rejected(
            "constant right-hand side: use the objective-uncertainty pipeline".into(),
        ));
    };
    let eps = opts.resolve_eps(canon);
    let bounds = canon.xi.coordinate_bounds(opts).map_err(KAdaptError::Uncertainty)?;
    let big_m = opts.big_m.unwrap_or_else(|| canon.derived_big_m(&bounds));
    let l = canon.n_rows();
    let n_xi = canon.n_xi();
    let r = canon.xi.num_rows();
    let indices = enumerate_indices(k, l, opts)?;

    let mut m = MilpModel::new();
    let stage = add_stage_vars(&mut m, canon, k);
    let tau = m.add_continuous("tau", -big_m, big_m);
    m.set_objective(vec![(tau, 1.0)], 0.0);

    for (bi, idx) in indices.iter().enumerate() {
        let mut cache = ProductCache::new();
        let tag = |s: &str| format!("{s}[{bi}]");

        let alpha: Vec<VarId> = (0..r).map(|rr| m.add_continuous(format!("al[{bi}.{rr}]"), 0.0, big_m)).collect();
        let alpha_k: Vec<Vec<VarId>> = (0..k)
            .map(|kk| (0..r).map(|rr| m.add_continuous(format!("al{kk}[{bi}.{rr}]"), 0.0, big_m)).collect())
            .collect();
        let gamma: Vec<VarId> = (0..k).map(|kk| m.add_continuous(format!("ga{kk}[{bi}]"), 0.0, big_m)).collect();
        // eta^k only where w can be 1; its product with w is what enters rows.
        let mut eta_bar: Vec<Vec<Option<VarId>>> = Vec::with_capacity(k);
        for kk in 0..k {
            let mut row = Vec::with_capacity(n_xi);
            for i in 0..n_xi {
                match stage.w[i] {
                    Some(wv) => {
                        let e = m.add_continuous(format!("eta{kk}[{bi}.{i}]"), -big_m, big_m);
                        row.push(Some(cache.get(&mut m, wv, e)?));
                    }
                    None => row.push(None),
                }
            }
            eta_bar.push(row);
        }

        // A' alpha = sum_k w o eta^k
        for i in 0..n_xi {
            let mut row = LinExpr::new();
            for rr in 0..r {
                row.add_term(alpha[rr], canon.xi.a[(rr, i)]);
            }
            for eb in &eta_bar {
                if let Some(p) = eb[i] {
                    row.add_term(p, -1.0);
                }
            }
            m.add_constraint_expr(row, Relation::Eq, 0.0);
        }

        if idx.all_violating() {
            // Farkas certificate block: dual rows with zero right-hand side
            // and the <= -1 ray row.
            for kk in 0..k {
                let hrow = idx.ell[kk] - 1;
                for i in 0..n_xi {
                    let mut row = LinExpr::new();
                    for rr in 0..r {
                        row.add_term(alpha_k[kk][rr], canon.xi.a[(rr, i)]);
                    }
                    row.add_term(gamma[kk], h_mat[(hrow, i)]);
                    if let Some(p) = eta_bar[kk][i] {
                        row.add_term(p, 1.0);
                    }
                    m.add_constraint_expr(row, Relation::Eq, 0.0);
                }
            }
            let mut ray = LinExpr::new();
            for rr in 0..r {
                ray.add_term(alpha[rr], canon.xi.b[rr]);
                for a in &alpha_k {
                    ray.add_term(a[rr], canon.xi.b[rr]);
                }
            }
            for kk in 0..k {
                let hrow = idx.ell[kk] - 1;
                let stage_term = stage_row_times_dual(&mut m, &mut cache, canon, &stage, kk, hrow, gamma[kk])?;
                ray.add_expr(&stage_term, 1.0);
                ray.add_term(gamma[kk], -eps);
            }
            m.add_constraint_expr(ray, Relation::Le, -1.0);
            let _ = tag;
        } else {
            // Dual-feasibility block and the tau lower-bound row.
            let feas_ks: Vec<usize> = (0..k).filter(|&kk| idx.ell[kk] == 0).collect();
            let lambda: HashMap<usize, VarId> = feas_ks
                .iter()
                .map(|&kk| (kk, m.add_continuous(format!("la{kk}[{bi}]"), 0.0, 1.0)))
                .collect();
            m.add_constraint(feas_ks.iter().map(|kk| (lambda[kk], 1.0)).collect(), Relation::Eq, 1.0);
            let beta_k: HashMap<usize, Vec<VarId>> = feas_ks
                .iter()
                .map(|&kk| {
                    let v: Vec<VarId> =
                        (0..l).map(|row| m.add_continuous(format!("be{kk}[{bi}.{row}]"), 0.0, big_m)).collect();
                    (kk, v)
                })
                .collect();

            for kk in 0..k {
                if idx.ell[kk] == 0 {
                    // A' alpha^k - H' beta^k + w o eta^k = lambda_k (C x + D w + Q y^k)
                    let lam = lambda[&kk];
                    let lam_x: Vec<VarId> = stage
                        .x
                        .iter()
                        .map(|&xv| cache.get(&mut m, xv, lam))
                        .collect::<Result<_, _>>()?;
                    let lam_w: Vec<Option<VarId>> = stage
                        .w
                        .iter()
                        .map(|wv| wv.map(|wv| cache.get(&mut m, wv, lam)).transpose())
                        .collect::<Result<_, _>>()?;
                    let lam_y: Vec<VarId> = stage.policies[kk]
                        .iter()
                        .map(|&yv| cache.get(&mut m, yv, lam))
                        .collect::<Result<_, _>>()?;
                    for i in 0..n_xi {
                        let mut row = LinExpr::new();
                        for rr in 0..r {
                            row.add_term(alpha_k[kk][rr], canon.xi.a[(rr, i)]);
                        }
                        for lrow in 0..l {
                            let c = h_mat[(lrow, i)];
                            if c != 0.0 {
                                row.add_term(beta_k[&kk][lrow], -c);
                            }
                        }
                        if let Some(p) = eta_bar[kk][i] {
                            row.add_term(p, 1.0);
                        }
                        for (j, &pv) in lam_x.iter().enumerate() {
                            row.add_term(pv, -canon.cost_x[(i, j)]);
                        }
                        for (j, pv) in lam_w.iter().enumerate() {
                            if let Some(pv) = *pv {
                                row.add_term(pv, -canon.cost_w[(i, j)]);
                            }
                        }
                        for (j, &pv) in lam_y.iter().enumerate() {
                            row.add_term(pv, -canon.cost_y[(i, j)]);
                        }
                        m.add_constraint_expr(row, Relation::Eq, 0.0);
                    }
                } else {
                    // A' alpha^k + [H]_{ell_k} gamma_k + w o eta^k = 0
                    let hrow = idx.ell[kk] - 1;
                    for i in 0..n_xi {
                        let mut row = LinExpr::new();
                        for rr in 0..r {
                            row.add_term(alpha_k[kk][rr], canon.xi.a[(rr, i)]);
                        }
                        row.add_term(gamma[kk], h_mat[(hrow, i)]);
                        if let Some(p) = eta_bar[kk][i] {
                            row.add_term(p, 1.0);
                        }
                        m.add_constraint_expr(row, Relation::Eq, 0.0);
                    }
                }
            }

            // tau >= b'(alpha + sum alpha^k) - sum_{ell_k=0} (stage_k)' beta^k
            //        + sum_{ell_k!=0} ([stage_k]_{ell_k} - eps) gamma_k
            let mut rhs = LinExpr::new();
            for rr in 0..r {
                rhs.add_term(alpha[rr], canon.xi.b[rr]);
                for a in &alpha_k {
                    rhs.add_term(a[rr], canon.xi.b[rr]);
                }
            }
            for kk in 0..k {
                if idx.ell[kk] == 0 {
                    for lrow in 0..l {
                        let term =
                            stage_row_times_dual(&mut m, &mut cache, canon, &stage, kk, lrow, beta_k[&kk][lrow])?;
                        rhs.add_expr(&term, -1.0);
                    }
                } else {
                    let hrow = idx.ell[kk] - 1;
                    let term = stage_row_times_dual(&mut m, &mut cache, canon, &stage, kk, hrow, gamma[kk])?;
                    rhs.add_expr(&term, 1.0);
                    rhs.add_term(gamma[kk], -eps);
                }
            }
            let mut row = LinExpr::term(tau, 1.0);
            row.add_expr(&rhs, -1.0);
            m.add_constraint_expr(row, Relation::Ge, 0.0);
        }
    }

    if opts.symmetry_breaking.enabled(k) && k >= 2 {
        speedups::add_auto_symmetry_breaking(&mut m, canon, &stage.policies);
    }

    Ok((m, ConstraintVarMap { stage, big_m }))
}

/// Solves the constraint-uncertainty K-adaptability problem. Small models go
/// through the assembled MBLP; above `milp_var_cap` first-stage decisions are
/// enumerated and priced with [`evaluate_constraint_fixed`], which solves the
/// same per-index LPs the dual blocks encode.
pub fn solve_kadapt_constraint(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    let canon = inst.canonicalize();
    let eps = opts.resolve_eps(&canon);
    // Size the model cheaply before committing to the build.
    let l = canon.n_rows();
    let indices = enumerate_indices(k, l, opts)?;
    let r = canon.xi.num_rows();
    let per_block = r * (k + 1) + k * (l + canon.n_xi() + 4);
    let estimate = indices.len() * per_block;
    let mut sol = if estimate <= opts.milp_var_cap {
        let (model, map) = build_constraint_model(&canon, k, opts)?;
        if model.num_vars() <= opts.milp_var_cap {
            solve_constraint_mblp(&canon, &model, &map, k, opts)?
        } else {
            solve_constraint_by_enumeration(&canon, k, eps, opts)?
        }
    } else {
        solve_constraint_by_enumeration(&canon, k, eps, opts)?
    };
    sol.value *= inst.report_sign();
    Ok(sol)
}

fn solve_constraint_mblp(
    canon: &DdidInstance,
    model: &MilpModel,
    map: &ConstraintVarMap,
    k: usize,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    let milp = solve_milp(model, opts)?;
    match milp.status {
        SolveStatus::Optimal | SolveStatus::LimitReached if !milp.primal.is_empty() => {}
        SolveStatus::Infeasible => return Ok(KAdaptSolution::infeasible(canon, k, SolveMethod::Mblp)),
        s => {
            let mut out = KAdaptSolution::infeasible(canon, k, SolveMethod::Mblp);
            out.status = s;
            out.nodes = milp.nodes;
            return Ok(out);
        }
    }
    let p = &milp.primal;
    let warnings = binding_big_m_report(model, p, map.big_m, opts.lp_feas_tol);
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
}

fn solve_constraint_by_enumeration(
    canon: &DdidInstance,
    k: usize,
    eps: f64,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    let xs = crate::oracles::enumerate_members(&canon.set_x, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let ws = crate::oracles::enumerate_members(&canon.set_w, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let ys = crate::oracles::enumerate_members(&canon.set_y, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    if ys.is_empty() {
        return Ok(KAdaptSolution::infeasible(canon, k, SolveMethod::Enumeration));
    }
    let mut best: Option<(f64, Vec<u8>, Vec<u8>, Vec<Vec<u8>>)> = None;
    for x in &xs {
        for w in &ws {
            for combo in crate::oracles::multisets(ys.len(), k) {
                let policies: Vec<Vec<u8>> = combo.iter().map(|&i| ys[i].clone()).collect();
                let v = evaluate_constraint_fixed(canon, x, w, &policies, eps, opts)?;
                if v.is_finite() && best.as_ref().map_or(true, |(bv, ..)| v < bv - 1e-12) {
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

/// Evaluates a fixed decision tuple in the epsilon-approximate model: one
/// value LP per index with a feasible policy, one emptiness LP per
/// all-violating index. Returns +infinity when some all-violating slice is
/// non-empty (no policy covers that scenario). Canonical minimize sense.
pub fn evaluate_constraint_fixed(
    canon: &DdidInstance,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    eps: f64,
    opts: &SolverOptions,
) -> Result<f64, KAdaptError> {
    let RhsMode::Uncertain(h_mat) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constraint-uncertainty instance required".into()));
    };
    let k = policies.len();
    let l = canon.n_rows();
    let indices = enumerate_indices(k, l, opts)?;
    let stage_rows: Vec<Vec<f64>> = policies.iter().map(|y| canon.stage_lhs(x, w, y)).collect();

    // Emptiness checks first: any witness scenario makes the tuple worthless.
    for idx in indices.iter().filter(|i| i.all_violating()) {
        let lp = build_index_lp(canon, h_mat, x, w, policies, &stage_rows, idx, eps, false);
        let sol = crate::milp::solve_lp(&lp, opts)?;
        match sol.status {
            SolveStatus::Infeasible => {}
            SolveStatus::Optimal => return Ok(f64::INFINITY),
            s => return Err(KAdaptError::LpFailed(s)),
        }
    }

    let mut best = f64::NEG_INFINITY;
    for idx in indices.iter().filter(|i| !i.all_violating()) {
        let lp = build_index_lp(canon, h_mat, x, w, policies, &stage_rows, idx, eps, true);
        let sol = crate::milp::solve_lp(&lp, opts)?;
        match sol.status {
            SolveStatus::Infeasible => {} // empty branch contributes nothing
            SolveStatus::Optimal => best = best.max(-sol.value),
            s => return Err(KAdaptError::LpFailed(s)),
        }
    }
    Ok(best)
}

/// The primal LP over `(tau?, xi_bar, xi^1..xi^K)` for one violation index:
/// shared-coordinate linking, per-policy feasibility (`ell_k = 0`) or
/// eps-margin violation rows, and optionally the epigraph objective over the
/// feasible policies.
#[allow(clippy::too_many_arguments)]
fn build_index_lp(
    canon: &DdidInstance,
    h_mat: &crate::matrix::Matrix,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    stage_rows: &[Vec<f64>],
    idx: &ViolationIndex,
    eps: f64,
    with_objective: bool,
) -> MilpModel {
    let k = policies.len();
    let mut m = MilpModel::new();
    let xi_bar = add_xi_vars(&mut m, canon, "_bar");
    let tau = with_objective.then(|| m.add_continuous("tau", f64::NEG_INFINITY, f64::INFINITY));
    for kk in 0..k {
        let xi_k = add_xi_vars(&mut m, canon, &format!("_{kk}"));
        for i in 0..canon.n_xi() {
            if w[i] == 1 {
                m.add_constraint(vec![(xi_k[i], 1.0), (xi_bar[i], -1.0)], Relation::Eq, 0.0);
            }
        }
        if idx.ell[kk] == 0 {
            // stage_k <= H xi^k rowwise
            for row in 0..canon.n_rows() {
                let mut expr = LinExpr::new();
                for i in 0..canon.n_xi() {
                    expr.add_term(xi_k[i], -h_mat[(row, i)]);
                }
                m.add_constraint_expr(expr, Relation::Le, -stage_rows[kk][row]);
            }
            if let Some(tau) = tau {
                // tau <= objective of policy k at xi^k
                let coeffs = canon.objective_coeffs(x, w, &policies[kk]);
                let mut row = LinExpr::term(tau, 1.0);
                for (i, c) in coeffs.iter().enumerate() {
                    row.add_term(xi_k[i], -c);
                }
                m.add_constraint_expr(row, Relation::Le, 0.0);
            }
        } else {
            // [stage_k]_{ell_k} >= [H xi^k]_{ell_k} + eps
            let row = idx.ell[kk] - 1;
            let mut expr = LinExpr::new();
            for i in 0..canon.n_xi() {
                expr.add_term(xi_k[i], h_mat[(row, i)]);
            }
            m.add_constraint_expr(expr, Relation::Le, stage_rows[kk][row] - eps);
        }
    }
    if let Some(tau) = tau {
        m.set_objective(vec![(tau, -1.0)], 0.0);
    } else {
        m.set_objective(vec![], 0.0);
    }
    m
}

/// The reduced exogenous MBLP (`w = 1`, `D = 0`, `V = 0`) for constraint
/// uncertainty: an independent construction used to cross-check the full
/// model on exogenous instances. The shared-scenario multipliers `eta^k`
/// are eliminated and the per-policy `alpha^k` fold into a single `alpha`.
pub fn build_exogenous_constraint_mblp(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<MilpModel, KAdaptError> {
    let canon = inst.canonicalize();
    opts.validate().map_err(KAdaptError::BadOptions)?;
    let RhsMode::Uncertain(h_mat) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constraint-uncertainty instance required".into()));
    };
    if !canon.cost_w.is_zero() || !canon.cons_w.is_zero() {
        return Err(KAdaptError::Rejected("exogenous form requires D = 0 and V = 0".into()));
    }
    let eps = opts.resolve_eps(&canon);
    let bounds = canon.xi.coordinate_bounds(opts).map_err(KAdaptError::Uncertainty)?;
    let big_m = opts.big_m.unwrap_or_else(|| canon.derived_big_m(&bounds));
    let l = canon.n_rows();
    let n_xi = canon.n_xi();
    let r = canon.xi.num_rows();
    let indices = enumerate_indices(k, l, opts)?;

    let mut m = MilpModel::new();
    let x: Vec<VarId> = (0..canon.n_x()).map(|j| m.add_binary(format!("x[{j}]"))).collect();
    let policies: Vec<Vec<VarId>> = (0..k)
        .map(|kk| (0..canon.n_y()).map(|j| m.add_binary(format!("y{kk}[{j}]"))).collect())
        .collect();
    canon.set_x.apply_to_model(&mut m, &x.iter().copied().map(Some).collect::<Vec<_>>());
    for yk in &policies {
        canon.set_y.apply_to_model(&mut m, &yk.iter().copied().map(Some).collect::<Vec<_>>());
    }
    let stage = StageVars { x, w: vec![None; n_xi], policies };
    let tau = m.add_continuous("tau", -big_m, big_m);
    m.set_objective(vec![(tau, 1.0)], 0.0);

    for (bi, idx) in indices.iter().enumerate() {
        let mut cache = ProductCache::new();
        let alpha: Vec<VarId> = (0..r).map(|rr| m.add_continuous(format!("al[{bi}.{rr}]"), 0.0, big_m)).collect();
        let gamma: Vec<VarId> = (0..k).map(|kk| m.add_continuous(format!("ga{kk}[{bi}]"), 0.0, big_m)).collect();

        if idx.all_violating() {
            for i in 0..n_xi {
                let mut row = LinExpr::new();
                for rr in 0..r {
                    row.add_term(alpha[rr], canon.xi.a[(rr, i)]);
                }
                for kk in 0..k {
                    row.add_term(gamma[kk], h_mat[(idx.ell[kk] - 1, i)]);
                }
                m.add_constraint_expr(row, Relation::Eq, 0.0);
            }
            let mut ray = LinExpr::new();
            for rr in 0..r {
                ray.add_term(alpha[rr], canon.xi.b[rr]);
            }
            for kk in 0..k {
                let hrow = idx.ell[kk] - 1;
                let term = stage_row_times_dual(&mut m, &mut cache, &canon, &stage, kk, hrow, gamma[kk])?;
                ray.add_expr(&term, 1.0);
                ray.add_term(gamma[kk], -eps);
            }
            m.add_constraint_expr(ray, Relation::Le, -1.0);
        } else {
            let feas_ks: Vec<usize> = (0..k).filter(|&kk| idx.ell[kk] == 0).collect();
            let lambda: HashMap<usize, VarId> = feas_ks
                .iter()
                .map(|&kk| (kk, m.add_continuous(format!("la{kk}[{bi}]"), 0.0, 1.0)))
                .collect();
            m.add_constraint(feas_ks.iter().map(|kk| (lambda[kk], 1.0)).collect(), Relation::Eq, 1.0);
            let beta_k: HashMap<usize, Vec<VarId>> = feas_ks
                .iter()
                .map(|&kk| {
                    let v: Vec<VarId> =
                        (0..l).map(|row| m.add_continuous(format!("be{kk}[{bi}.{row}]"), 0.0, big_m)).collect();
                    (kk, v)
                })
                .collect();

            for i in 0..n_xi {
                let mut row = LinExpr::new();
                for rr in 0..r {
                    row.add_term(alpha[rr], canon.xi.a[(rr, i)]);
                }
                for &kk in &feas_ks {
                    for lrow in 0..l {
                        let c = h_mat[(lrow, i)];
                        if c != 0.0 {
                            row.add_term(beta_k[&kk][lrow], -c);
                        }
                    }
                }
                for kk in 0..k {
                    if idx.ell[kk] != 0 {
                        row.add_term(gamma[kk], h_mat[(idx.ell[kk] - 1, i)]);
                    }
                }
                for (j, &xv) in stage.x.iter().enumerate() {
                    row.add_term(xv, -canon.cost_x[(i, j)]);
                }
                for &kk in &feas_ks {
                    let lam = lambda[&kk];
                    for (j, &yv) in stage.policies[kk].iter().enumerate() {
                        let c = canon.cost_y[(i, j)];
                        if c != 0.0 {
                            let p = cache.get(&mut m, yv, lam)?;
                            row.add_term(p, -c);
                        }
                    }
                }
                m.add_constraint_expr(row, Relation::Eq, 0.0);
            }

            let mut rhs = LinExpr::new();
            for rr in 0..r {
                rhs.add_term(alpha[rr], canon.xi.b[rr]);
            }
            for kk in 0..k {
                if idx.ell[kk] == 0 {
                    for lrow in 0..l {
                        let term =
                            stage_row_times_dual(&mut m, &mut cache, &canon, &stage, kk, lrow, beta_k[&kk][lrow])?;
                        rhs.add_expr(&term, -1.0);
                    }
                } else {
                    let hrow = idx.ell[kk] - 1;
                    let term = stage_row_times_dual(&mut m, &mut cache, &canon, &stage, kk, hrow, gamma[kk])?;
                    rhs.add_expr(&term, 1.0);
                    rhs.add_term(gamma[kk], -eps);
                }
            }
            let mut row = LinExpr::term(tau, 1.0);
            row.add_expr(&rhs, -1.0);
            m.add_constraint_expr(row, Relation::Ge, 0.0);
        }
    }
    Ok(m)
}
