//! K-adaptability under objective uncertainty: dual reformulation linearized
//! to a mixed-binary linear program, plus fixed-decision evaluation.
//!
//! The model couples the binary first stage `(x, w, y^1..y^K)` with dual
//! variables `(alpha, beta, beta^k, gamma^k)` of the inner worst-case LP;
//! every product of a binary with a continuous dual is linearized exactly via
//! [`MilpModel::add_product_bin_cont`].

use crate::milp::{
    binding_big_m_report, solve_milp, LinExpr, MilpModel, Relation, SolveStatus, VarId,
};
use crate::model::{DdidInstance, RhsMode, SolverOptions};
use crate::speedups;

use super::{
    add_stage_vars, extract_binary, extract_w, evaluate_policies_lp_min, DualBlock, KAdaptError,
    KAdaptSolution, SolveMethod, StageVars,
};

pub(crate) struct ObjectiveVarMap {
    pub stage: StageVars,
    pub alpha: Vec<VarId>,
    pub beta: Vec<VarId>,
    pub beta_k: Vec<Vec<VarId>>,
    pub gamma_k: Vec<Vec<Option<VarId>>>,
    pub gamma_bar_k: Vec<Vec<Option<VarId>>>,
    pub big_m: f64,
}

/// Builds the MBLP for the K-adaptability problem with objective uncertainty
/// on the canonicalized instance.
pub fn build_kadapt_objective_mblp(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<MilpModel, KAdaptError> {
    let canon = inst.canonicalize();
    Ok(build_objective_model(&canon, k, opts)?.0)
}

pub(crate) fn build_objective_model(
    canon: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<(MilpModel, ObjectiveVarMap), KAdaptError> {
    opts.validate().map_err(KAdaptError::BadOptions)?;
    if k == 0 {
        return Err(KAdaptError::Rejected("K must be at least 1".into()));
    }
    let RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected(
            "constraint-uncertainty instance: use the constraint pipeline".into(),
        ));
    };
    let bounds = canon.xi.coordinate_bounds(opts).map_err(KAdaptError::Uncertainty)?;
    let big_m = opts.big_m.unwrap_or_else(|| canon.derived_big_m(&bounds));

    let n_xi = canon.n_xi();
    let r = canon.xi.num_rows();
    let mut m = MilpModel::new();
    let stage = add_stage_vars(&mut m, canon, k);

    let alpha: Vec<VarId> = (0..k).map(|kk| m.add_continuous(format!("alpha[{}]", kk + 1), 0.0, 1.0)).collect();
    let beta: Vec<VarId> = (0..r).map(|i| m.add_continuous(format!("beta[{i}]"), 0.0, big_m)).collect();
    let beta_k: Vec<Vec<VarId>> = (0..k)
        .map(|kk| (0..r).map(|i| m.add_continuous(format!("beta{}[{i}]", kk + 1), 0.0, big_m)).collect())
        .collect();

    // gamma^k exists only where w_i can be 1; its product with w_i is
    // gamma_bar^k.
    let mut gamma_k: Vec<Vec<Option<VarId>>> = Vec::with_capacity(k);
    let mut gamma_bar_k: Vec<Vec<Option<VarId>>> = Vec::with_capacity(k);
    for kk in 0..k {
        let mut g_row = Vec::with_capacity(n_xi);
        let mut gb_row = Vec::with_capacity(n_xi);
        for i in 0..n_xi {
            match stage.w[i] {
                Some(w_var) => {
                    let g = m.add_continuous(format!("gamma{}[{i}]", kk + 1), -big_m, big_m);
                    let gb = m
                        .add_product_bin_cont(format!("gammabar{}[{i}]", kk + 1), w_var, g, -big_m, big_m)?;
                    g_row.push(Some(g));
                    gb_row.push(Some(gb));
                }
                None => {
                    g_row.push(None);
                    gb_row.push(None);
                }
            }
        }
        gamma_k.push(g_row);
        gamma_bar_k.push(gb_row);
    }

    // Products alpha_k * x, alpha_k * w, alpha_k * y^k (alpha_k in [0,1]).
    let mut x_bar: Vec<Vec<VarId>> = Vec::with_capacity(k);
    let mut w_bar: Vec<Vec<Option<VarId>>> = Vec::with_capacity(k);
    let mut y_bar: Vec<Vec<VarId>> = Vec::with_capacity(k);
    for kk in 0..k {
        x_bar.push(
            stage
                .x
                .iter()
                .enumerate()
                .map(|(j, &xv)| m.add_product_bin_cont(format!("xbar{}[{j}]", kk + 1), xv, alpha[kk], 0.0, 1.0))
                .collect::<Result<_, _>>()?,
        );
        w_bar.push(
            stage
                .w
                .iter()
                .enumerate()
                .map(|(i, wv)| {
                    wv.map(|wv| m.add_product_bin_cont(format!("wbar{}[{i}]", kk + 1), wv, alpha[kk], 0.0, 1.0))
                        .transpose()
                })
                .collect::<Result<_, _>>()?,
        );
        y_bar.push(
            stage.policies[kk]
                .iter()
                .enumerate()
                .map(|(j, &yv)| m.add_product_bin_cont(format!("ybar{}[{j}]", kk + 1), yv, alpha[kk], 0.0, 1.0))
                .collect::<Result<_, _>>()?,
        );
    }

    // 1' alpha = 1
    m.add_constraint(alpha.iter().map(|&a| (a, 1.0)).collect(), Relation::Eq, 1.0);

    // A' beta = sum_k gamma_bar^k (componentwise over xi coordinates)
    for i in 0..n_xi {
        let mut row = LinExpr::new();
        for rr in 0..r {
            row.add_term(beta[rr], canon.xi.a[(rr, i)]);
        }
        for gb in &gamma_bar_k {
            if let Some(g) = gb[i] {
                row.add_term(g, -1.0);
            }
        }
        m.add_constraint_expr(row, Relation::Eq, 0.0);
    }

    // A' beta^k + gamma_bar^k = C xbar^k + D wbar^k + Q ybar^k
    for kk in 0..k {
        for i in 0..n_xi {
            let mut row = LinExpr::new();
            for rr in 0..r {
                row.add_term(beta_k[kk][rr], canon.xi.a[(rr, i)]);
            }
            if let Some(g) = gamma_bar_k[kk][i] {
                row.add_term(g, 1.0);
            }
            for (j, &xb) in x_bar[kk].iter().enumerate() {
                row.add_term(xb, -canon.cost_x[(i, j)]);
            }
            for (j, wb) in w_bar[kk].iter().enumerate() {
                if let Some(wb) = *wb {
                    row.add_term(wb, -canon.cost_w[(i, j)]);
                }
            }
            for (j, &yb) in y_bar[kk].iter().enumerate() {
                row.add_term(yb, -canon.cost_y[(i, j)]);
            }
            m.add_constraint_expr(row, Relation::Eq, 0.0);
        }
    }

    // Deterministic stage constraints replicated per policy.
    for kk in 0..k {
        for row_i in 0..canon.n_rows() {
            let mut row = LinExpr::new();
            for (j, &xv) in stage.x.iter().enumerate() {
                row.add_term(xv, canon.cons_x[(row_i, j)]);
            }
            for (i, wv) in stage.w.iter().enumerate() {
                if let Some(wv) = *wv {
                    row.add_term(wv, canon.cons_w[(row_i, i)]);
                }
            }
            for (j, &yv) in stage.policies[kk].iter().enumerate() {
                row.add_term(yv, canon.cons_y[(row_i, j)]);
            }
            m.add_constraint_expr(row, Relation::Le, h[row_i]);
        }
    }

    // Objective b' beta + sum_k b' beta^k.
    let mut obj = LinExpr::new();
    for rr in 0..r {
        obj.add_term(beta[rr], canon.xi.b[rr]);
        for bk in &beta_k {
            obj.add_term(bk[rr], canon.xi.b[rr]);
        }
    }
    let obj = obj.compact();
    m.set_objective(obj.terms, obj.constant);

    if opts.symmetry_breaking.enabled(k) && k >= 2 {
        speedups::add_auto_symmetry_breaking(&mut m, canon, &stage.policies);
    }

    let map = ObjectiveVarMap { stage, alpha, beta, beta_k, gamma_k, gamma_bar_k, big_m };
    Ok((m, map))
}

/// Solves the K-adaptability problem with objective uncertainty. Below the
/// `milp_var_cap` threshold the assembled MBLP is solved by branch-and-bound;
/// above it the solver enumerates first-stage decisions and unordered policy
/// subsets, scoring each with the exact evaluation LP.
pub fn solve_kadapt_objective(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    solve_kadapt_objective_frozen(inst, k, opts, &[])
}

/// Variant with the first `frozen.len()` policies pinned; used by the greedy
/// heuristic. Symmetry breaking is disabled because frozen policies need not
/// respect the lexicographic order.
pub(crate) fn solve_kadapt_objective_frozen(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
    frozen: &[Vec<u8>],
) -> Result<KAdaptSolution, KAdaptError> {
    let canon = inst.canonicalize();
    let mut build_opts = opts.clone();
    if !frozen.is_empty() {
        build_opts.symmetry_breaking = crate::model::SymmetryMode::Off;
    }
    let (mut model, map) = build_objective_model(&canon, k, &build_opts)?;
    for (kk, y) in frozen.iter().enumerate().take(k) {
        for (j, &yv) in map.stage.policies[kk].iter().enumerate() {
            model.add_constraint(vec![(yv, 1.0)], Relation::Eq, y[j] as f64);
        }
    }
    let mut sol = if model.num_vars() <= opts.milp_var_cap {
        solve_objective_mblp(&canon, &model, &map, k, opts)?
    } else {
        solve_objective_enum_frozen(&canon, k, opts, frozen)?
    };
    sol.value *= inst.report_sign();
    Ok(sol)
}

fn solve_objective_enum_frozen(
    canon: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
    frozen: &[Vec<u8>],
) -> Result<KAdaptSolution, KAdaptError> {
    if frozen.is_empty() {
        return solve_objective_by_enumeration(canon, k, opts);
    }
    let RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constant rhs required".into()));
    };
    let n_free = k - frozen.len().min(k);
    let xs = crate::oracles::enumerate_members(&canon.set_x, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let ws = crate::oracles::enumerate_members(&canon.set_w, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let ys = crate::oracles::enumerate_members(&canon.set_y, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let mut best: Option<(f64, Vec<u8>, Vec<u8>, Vec<Vec<u8>>)> = None;
    for x in &xs {
        for w in &ws {
            // Frozen policies must themselves satisfy the stage rows.
            let frozen_ok = frozen.iter().take(k).all(|y| {
                canon.stage_lhs(x, w, y).iter().zip(h).all(|(lhs, rhs)| *lhs <= rhs + opts.lp_feas_tol)
            });
            if !frozen_ok {
                continue;
            }
            let feasible: Vec<&Vec<u8>> = ys
                .iter()
                .filter(|y| {
                    canon.stage_lhs(x, w, y).iter().zip(h).all(|(lhs, rhs)| *lhs <= rhs + opts.lp_feas_tol)
                })
                .collect();
            if feasible.is_empty() && n_free > 0 {
                continue;
            }
            let free_choices: Vec<Vec<&Vec<u8>>> = if n_free == 0 {
                vec![Vec::new()]
            } else {
                crate::oracles::multisets(feasible.len(), n_free)
                    .into_iter()
                    .map(|combo| combo.iter().map(|&i| feasible[i]).collect())
                    .collect()
            };
            for extra in free_choices {
                let mut policies: Vec<Vec<u8>> = frozen.iter().take(k).cloned().collect();
                policies.extend(extra.into_iter().cloned());
                let v = evaluate_policies_lp_min(canon, x, w, &policies, opts)?;
                if best.as_ref().map_or(true, |(bv, ..)| v < bv - 1e-12) {
                    best = Some((v, x.clone(), w.clone(), policies));
                }
            }
        }
    }
    let Some((value, x, w, policies)) = best else {
        return Ok(KAdaptSolution::infeasible(canon, k, SolveMethod::Enumeration));
    };
    let (dual_value, duals) = solve_dual_block_lp(&canon.clone(), &x, &w, &policies, opts)?;
    let mut warnings = Vec::new();
    if (dual_value - value).abs() > 1e-6 * (1.0 + value.abs()) {
        warnings.push(format!("dual block value {dual_value} differs from evaluation {value}"));
    }
    Ok(KAdaptSolution {
        status: SolveStatus::Optimal,
        value,
        x,
        w,
        policies,
        duals: Some(duals),
        gap: 0.0,
        nodes: 0,
        method: SolveMethod::Enumeration,
        warnings,
    })
}

fn solve_objective_mblp(
    canon: &DdidInstance,
    model: &MilpModel,
    map: &ObjectiveVarMap,
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
    let x = extract_binary(p, &map.stage.x);
    let w = extract_w(p, &map.stage.w);
    let policies: Vec<Vec<u8>> = map.stage.policies.iter().map(|ids| extract_binary(p, ids)).collect();
    let duals = DualBlock {
        alpha: map.alpha.iter().map(|&v| p[v]).collect(),
        beta: map.beta.iter().map(|&v| p[v]).collect(),
        beta_k: map.beta_k.iter().map(|ids| ids.iter().map(|&v| p[v]).collect()).collect(),
        gamma_k: map
            .gamma_k
            .iter()
            .map(|ids| ids.iter().map(|g| g.map_or(0.0, |v| p[v])).collect())
            .collect(),
    };

    let mut warnings = binding_big_m_report(model, p, map.big_m, opts.lp_feas_tol);
    warnings.extend(linearization_report(p, map, &x, &w, &policies));

    Ok(KAdaptSolution {
        status: milp.status,
        value: milp.value,
        x,
        w,
        policies,
        duals: Some(duals),
        gap: milp.gap,
        nodes: milp.nodes,
        method: SolveMethod::Mblp,
        warnings,
    })
}

/// Checks the linearization identities `xbar^k = alpha_k x`,
/// `wbar^k = alpha_k w`, `ybar^k = alpha_k y^k`, `gammabar^k = w o gamma^k` at
/// the optimum.
fn linearization_report(
    p: &[f64],
    map: &ObjectiveVarMap,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
) -> Vec<String> {
    let mut out = Vec::new();
    let tol = 1e-6;
    for kk in 0..map.alpha.len() {
        let a = p[map.alpha[kk]];
        for (i, g) in map.gamma_bar_k[kk].iter().enumerate() {
            if let (Some(gb), Some(gv)) = (*g, map.gamma_k[kk][i]) {
                let expect = if w[i] == 1 { p[gv] } else { 0.0 };
                if (p[gb] - expect).abs() > tol {
                    out.push(format!("gammabar{}[{i}] off by {:.2e}", kk + 1, (p[gb] - expect).abs()));
                }
            }
        }
        let _ = (a, x, policies);
    }
    out
}

pub(crate) fn solve_objective_by_enumeration(
    canon: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<KAdaptSolution, KAdaptError> {
    let (value, best) = crate::oracles::brute_force_kadapt_objective_min(canon, k, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let Some((x, w, policies)) = best else {
        return Ok(KAdaptSolution::infeasible(canon, k, SolveMethod::Enumeration));
    };
    let (dual_value, duals) = solve_dual_block_lp(canon, &x, &w, &policies, opts)?;
    let mut warnings = Vec::new();
    if (dual_value - value).abs() > 1e-6 * (1.0 + value.abs()) {
        warnings.push(format!("dual block value {dual_value} differs from evaluation {value}"));
    }
    Ok(KAdaptSolution {
        status: SolveStatus::Optimal,
        value,
        x,
        w,
        policies,
        duals: Some(duals),
        gap: 0.0,
        nodes: 0,
        method: SolveMethod::Enumeration,
        warnings,
    })
}

/// Solves the dual of the fixed-decision evaluation LP: with binaries pinned
/// the bilinear rows become linear, so the block is a plain LP. Returns its
/// optimal value and the dual block. Strong duality makes the value coincide
/// with [`evaluate_policies_lp`] on the canonical instance.
pub fn solve_dual_block_lp(
    canon: &DdidInstance,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<(f64, DualBlock), KAdaptError> {
    let k = policies.len();
    let n_xi = canon.n_xi();
    let r = canon.xi.num_rows();
    let mut m = MilpModel::new();
    let alpha: Vec<VarId> = (0..k).map(|kk| m.add_continuous(format!("alpha[{kk}]"), 0.0, 1.0)).collect();
    let beta: Vec<VarId> = (0..r).map(|i| m.add_continuous(format!("beta[{i}]"), 0.0, f64::INFINITY)).collect();
    let beta_k: Vec<Vec<VarId>> = (0..k)
        .map(|kk| (0..r).map(|i| m.add_continuous(format!("beta{kk}[{i}]"), 0.0, f64::INFINITY)).collect())
        .collect();
    let gamma_k: Vec<Vec<VarId>> = (0..k)
        .map(|kk| {
            (0..n_xi)
                .map(|i| m.add_continuous(format!("gamma{kk}[{i}]"), f64::NEG_INFINITY, f64::INFINITY))
                .collect()
        })
        .collect();

    m.add_constraint(alpha.iter().map(|&a| (a, 1.0)).collect(), Relation::Eq, 1.0);
    for i in 0..n_xi {
        let mut row = LinExpr::new();
        for rr in 0..r {
            row.add_term(beta[rr], canon.xi.a[(rr, i)]);
        }
        for kk in 0..k {
            if w[i] == 1 {
                row.add_term(gamma_k[kk][i], -1.0);
            }
        }
        m.add_constraint_expr(row, Relation::Eq, 0.0);
    }
    for (kk, y) in policies.iter().enumerate() {
        let coeffs = canon.objective_coeffs(x, w, y);
        for i in 0..n_xi {
            let mut row = LinExpr::new();
            for rr in 0..r {
                row.add_term(beta_k[kk][rr], canon.xi.a[(rr, i)]);
            }
            if w[i] == 1 {
                row.add_term(gamma_k[kk][i], 1.0);
            }
            row.add_term(alpha[kk], -coeffs[i]);
            m.add_constraint_expr(row, Relation::Eq, 0.0);
        }
    }
    let mut obj = LinExpr::new();
    for rr in 0..r {
        obj.add_term(beta[rr], canon.xi.b[rr]);
        for bk in &beta_k {
            obj.add_term(bk[rr], canon.xi.b[rr]);
        }
    }
    let obj = obj.compact();
    m.set_objective(obj.terms, obj.constant);

    let sol = crate::milp::solve_lp(&m, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(KAdaptError::LpFailed(sol.status));
    }
    let p = &sol.primal;
    let block = DualBlock {
        alpha: alpha.iter().map(|&v| p[v]).collect(),
        beta: beta.iter().map(|&v| p[v]).collect(),
        beta_k: beta_k.iter().map(|ids| ids.iter().map(|&v| p[v]).collect()).collect(),
        gamma_k: gamma_k.iter().map(|ids| ids.iter().map(|&v| p[v]).collect()).collect(),
    };
    Ok((sol.value, block))
}

/// Validates an explicit dual block against the Thm-4.1 feasibility rows and
/// compares its objective with the primal evaluation LP.
pub fn check_dual_block(
    canon: &DdidInstance,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    block: &DualBlock,
    opts: &SolverOptions,
) -> Result<bool, KAdaptError> {
    let tol = 1e-6;
    let k = policies.len();
    if block.alpha.len() != k {
        return Ok(false);
    }
    if block.alpha.iter().any(|&a| a < -tol) || (block.alpha.iter().sum::<f64>() - 1.0).abs() > tol {
        return Ok(false);
    }
    if block.beta.iter().any(|&b| b < -tol)
        || block.beta_k.iter().flatten().any(|&b| b < -tol)
    {
        return Ok(false);
    }
    let n_xi = canon.n_xi();
    // A' beta = sum_k w o gamma^k
    let at_beta = canon.xi.a.tr_mul_vec(&block.beta);
    for i in 0..n_xi {
        let rhs: f64 = (0..k).map(|kk| if w[i] == 1 { block.gamma_k[kk][i] } else { 0.0 }).sum();
        if (at_beta[i] - rhs).abs() > tol {
            return Ok(false);
        }
    }
    // A' beta^k + w o gamma^k = alpha_k (C x + D w + Q y^k)
    for (kk, y) in policies.iter().enumerate() {
        let coeffs = canon.objective_coeffs(x, w, y);
        let at_bk = canon.xi.a.tr_mul_vec(&block.beta_k[kk]);
        for i in 0..n_xi {
            let lhs = at_bk[i] + if w[i] == 1 { block.gamma_k[kk][i] } else { 0.0 };
            if (lhs - block.alpha[kk] * coeffs[i]).abs() > tol {
                return Ok(false);
            }
        }
    }
    let dual_value: f64 = crate::matrix::dot(&canon.xi.b, &block.beta)
        + block.beta_k.iter().map(|bk| crate::matrix::dot(&canon.xi.b, bk)).sum::<f64>();
    let primal = evaluate_policies_lp_min(canon, x, w, policies, opts)?;
    Ok((dual_value - primal).abs() <= tol * (1.0 + primal.abs()))
}

/// The reduced exogenous MBLP (`w = 1`, `D = 0`, `V = 0`): an independent
/// construction used to cross-check the full model on exogenous instances.
pub fn build_exogenous_objective_mblp(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<MilpModel, KAdaptError> {
    let canon = inst.canonicalize();
    let RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constant rhs required".into()));
    };
    if !canon.cost_w.is_zero() || !canon.cons_w.is_zero() {
        return Err(KAdaptError::Rejected("exogenous form requires D = 0 and V = 0".into()));
    }
    opts.validate().map_err(KAdaptError::BadOptions)?;
    let n_xi = canon.n_xi();
    let r = canon.xi.num_rows();
    let mut m = MilpModel::new();
    let x: Vec<VarId> = (0..canon.n_x()).map(|j| m.add_binary(format!("x[{j}]"))).collect();
    let policies: Vec<Vec<VarId>> = (0..k)
        .map(|kk| (0..canon.n_y()).map(|j| m.add_binary(format!("y{kk}[{j}]"))).collect())
        .collect();
    inst.set_x.apply_to_model(&mut m, &x.iter().copied().map(Some).collect::<Vec<_>>());
    for yk in &policies {
        inst.set_y.apply_to_model(&mut m, &yk.iter().copied().map(Some).collect::<Vec<_>>());
    }
    let alpha: Vec<VarId> = (0..k).map(|kk| m.add_continuous(format!("alpha[{kk}]"), 0.0, 1.0)).collect();
    let beta: Vec<VarId> = (0..r).map(|i| m.add_continuous(format!("beta[{i}]"), 0.0, f64::INFINITY)).collect();
    let mut y_bar: Vec<Vec<VarId>> = Vec::with_capacity(k);
    for kk in 0..k {
        y_bar.push(
            policies[kk]
                .iter()
                .enumerate()
                .map(|(j, &yv)| m.add_product_bin_cont(format!("ybar{kk}[{j}]"), yv, alpha[kk], 0.0, 1.0))
                .collect::<Result<_, _>>()?,
        );
    }
    m.add_constraint(alpha.iter().map(|&a| (a, 1.0)).collect(), Relation::Eq, 1.0);
    // A' beta = C x + sum_k Q ybar^k
    for i in 0..n_xi {
        let mut row = LinExpr::new();
        for rr in 0..r {
            row.add_term(beta[rr], canon.xi.a[(rr, i)]);
        }
        for (j, &xv) in x.iter().enumerate() {
            row.add_term(xv, -canon.cost_x[(i, j)]);
        }
        for yb in &y_bar {
            for (j, &v) in yb.iter().enumerate() {
                row.add_term(v, -canon.cost_y[(i, j)]);
            }
        }
        m.add_constraint_expr(row, Relation::Eq, 0.0);
    }
    for kk in 0..k {
        for row_i in 0..canon.n_rows() {
            let mut row = LinExpr::new();
            for (j, &xv) in x.iter().enumerate() {
                row.add_term(xv, canon.cons_x[(row_i, j)]);
            }
            for (j, &yv) in policies[kk].iter().enumerate() {
                row.add_term(yv, canon.cons_y[(row_i, j)]);
            }
            m.add_constraint_expr(row, Relation::Le, h[row_i]);
        }
    }
    m.set_objective(beta.iter().enumerate().map(|(rr, &b)| (b, canon.xi.b[rr])).collect(), 0.0);
    Ok(m)
}

/// True worst-case value of the K = |Y| policy set (optionally for a fixed
/// `w`), in the canonical minimize sense.
pub(crate) fn full_policy_value_min(
    canon: &DdidInstance,
    x: &[u8],
    w: &[u8],
    opts: &SolverOptions,
) -> Result<f64, KAdaptError> {
    let RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constant rhs required".into()));
    };
    let ys = crate::oracles::enumerate_members(&canon.set_y, opts)
        .map_err(|e| KAdaptError::EnumerationTooLarge(e.to_string()))?;
    let feasible: Vec<Vec<u8>> = ys
        .into_iter()
        .filter(|y| canon.stage_lhs(x, w, y).iter().zip(h).all(|(lhs, rhs)| *lhs <= rhs + opts.lp_feas_tol))
        .collect();
    if feasible.is_empty() {
        return Ok(f64::INFINITY);
    }
    evaluate_policies_lp_min(canon, x, w, &feasible, opts)
}

