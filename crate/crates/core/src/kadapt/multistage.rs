//! Multi-stage K-adaptability with objective uncertainty.
//!
//! Per period, K candidate pairs (information base `w^t`, recourse `y^t`) are
//! fixed here-and-now; at each stage the best branch is chosen after the
//! newly observed coordinates are revealed. The model carries one dual chain
//! per branch path: a simplex weight per full K^T tuple, shared-scenario
//! multipliers per node, and telescoping rows tying consecutive stages
//! through the information bases. First-period information bases agree
//! across branches.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::milp::{solve_milp, LinExpr, MilpModel, Relation, SolveStatus, VarId};
use crate::model::{BinaryFeasibleSet, DdidInstance, RhsMode, SolverOptions, UncertaintySet};

use super::{KAdaptError, SolveMethod};

/// Per-period data for the dynamic problem: objective blocks `D^t`, `Q^t`,
/// budget blocks `V^t`, `W^t` sharing a constant right-hand side, stagewise
/// feasible sets, and the initial information base `w0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistageInstance {
    pub periods: usize,
    /// D^t: n_xi x n_xi, one per period.
    pub cost_w: Vec<Matrix>,
    /// Q^t: n_xi x n_y_t.
    pub cost_y: Vec<Matrix>,
    /// V^t: rows x n_xi.
    pub cons_w: Vec<Matrix>,
    /// W^t: rows x n_y_t.
    pub cons_y: Vec<Matrix>,
    pub rhs: Vec<f64>,
    pub xi: UncertaintySet,
    pub set_w: Vec<BinaryFeasibleSet>,
    pub set_y: Vec<BinaryFeasibleSet>,
    pub w0: Vec<u8>,
}

impl MultistageInstance {
    pub fn n_xi(&self) -> usize {
        self.xi.dim
    }

    pub fn n_y(&self, t: usize) -> usize {
        self.cost_y[t].cols
    }

    fn check(&self) -> Result<(), KAdaptError> {
        let t = self.periods;
        if t < 2 {
            return Err(KAdaptError::Rejected("multistage needs at least two periods".into()));
        }
        let n = self.n_xi();
        let l = self.rhs.len();
        let ok = self.cost_w.len() == t
            && self.cost_y.len() == t
            && self.cons_w.len() == t
            && self.cons_y.len() == t
            && self.set_w.len() == t
            && self.set_y.len() == t
            && self.w0.len() == n
            && self.cost_w.iter().all(|m| m.rows == n && m.cols == n)
            && self.cost_y.iter().all(|m| m.rows == n)
            && self.cons_w.iter().all(|m| m.rows == l && m.cols == n)
            && self.cons_y.iter().enumerate().all(|(tt, m)| m.rows == l && m.cols == self.n_y(tt))
            && self.w0.iter().zip(&self.xi.observable_mask).all(|(&w, &obs)| w == 0 || obs);
        if ok {
            Ok(())
        } else {
            Err(KAdaptError::Rejected("multistage instance dimensions are inconsistent".into()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultistageSolution {
    pub status: SolveStatus,
    pub value: f64,
    /// `w[t][k]`: information base of branch k at period t.
    pub w: Vec<Vec<Vec<u8>>>,
    /// `y[t][k]`: recourse of branch k at period t.
    pub y: Vec<Vec<Vec<u8>>>,
    pub gap: f64,
    pub nodes: usize,
    pub method: SolveMethod,
}

fn tuples(k: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::with_capacity(out.len() * k);
        for prefix in &out {
            for kk in 0..k {
                let mut p = prefix.clone();
                p.push(kk);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

pub(crate) struct MsVarMap {
    pub w_vars: Vec<Vec<Vec<Option<VarId>>>>,
    pub y_vars: Vec<Vec<Vec<VarId>>>,
}

/// Builds the multistage MBLP. `K^T` must stay within `tuple_cap`.
pub fn build_multistage_kadapt(
    ms: &MultistageInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<MilpModel, KAdaptError> {
    Ok(build_multistage_model(ms, k, opts)?.0)
}

pub(crate) fn build_multistage_model(
    ms: &MultistageInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<(MilpModel, MsVarMap), KAdaptError> {
    opts.validate().map_err(KAdaptError::BadOptions)?;
    ms.check()?;
    if k == 0 {
        return Err(KAdaptError::Rejected("K must be at least 1".into()));
    }
    let t_final = ms.periods;
    let mut total: usize = 1;
    for _ in 0..t_final {
        total = total
            .checked_mul(k)
            .filter(|&t| t <= opts.tuple_cap)
            .ok_or_else(|| KAdaptError::IndexCapExceeded(format!("K^T = {k}^{t_final} > {}", opts.tuple_cap)))?;
    }
    let bounds = ms.xi.coordinate_bounds(opts).map_err(KAdaptError::Uncertainty)?;
    let big_m = opts.big_m.unwrap_or_else(|| {
        let mut data_max: f64 = 1.0;
        for m in ms.cost_w.iter().chain(&ms.cons_w).chain(&ms.cost_y).chain(&ms.cons_y) {
            data_max = data_max.max(m.max_abs());
        }
        data_max = data_max.max(ms.rhs.iter().fold(0.0_f64, |a, &x| a.max(x.abs())));
        data_max = data_max.max(ms.xi.b.iter().fold(0.0_f64, |a, &x| a.max(x.abs())));
        let range = bounds.iter().fold(0.0_f64, |a, &(lo, hi)| a.max(hi - lo));
        10.0 * data_max * (1.0 + range)
    });

    let n_xi = ms.n_xi();
    let r = ms.xi.num_rows();
    let mut m = MilpModel::new();

    // Policy variables: w^{t,k} (first period shared across k by Lemma 7.1's
    // agreement constraint) and y^{t,k}; masked coordinates carry no w var.
    let mut w_vars: Vec<Vec<Vec<Option<VarId>>>> = Vec::with_capacity(t_final);
    let mut y_vars: Vec<Vec<Vec<VarId>>> = Vec::with_capacity(t_final);
    for t in 0..t_final {
        let mut per_k_w: Vec<Vec<Option<VarId>>> = Vec::with_capacity(k);
        let mut per_k_y = Vec::with_capacity(k);
        for kk in 0..k {
            let w_row: Vec<Option<VarId>> = if t == 0 && kk > 0 {
                per_k_w[0].clone()
            } else {
                (0..n_xi)
                    .map(|i| ms.xi.observable_mask[i].then(|| m.add_binary(format!("w{t}_{kk}[{i}]"))))
                    .collect()
            };
            if !(t == 0 && kk > 0) {
                ms.set_w[t].apply_to_model(&mut m, &w_row);
            }
            let y_row: Vec<VarId> = (0..ms.n_y(t)).map(|j| m.add_binary(format!("y{t}_{kk}[{j}]"))).collect();
            ms.set_y[t].apply_to_model(&mut m, &y_row.iter().copied().map(Some).collect::<Vec<_>>());
            per_k_w.push(w_row);
            per_k_y.push(y_row);
        }
        w_vars.push(per_k_w);
        y_vars.push(per_k_y);
    }

    // Information monotonicity along every branch pair, with the base w0.
    for kk in 0..k {
        for i in 0..n_xi {
            if let Some(wv) = w_vars[0][kk][i] {
                if ms.w0[i] == 1 {
                    m.add_constraint(vec![(wv, 1.0)], Relation::Ge, 1.0);
                }
            } else if ms.w0[i] == 1 {
                return Err(KAdaptError::Rejected(format!("w0 observes masked coordinate {i}")));
            }
        }
    }
    for t in 1..t_final {
        for kt in 0..k {
            for kp in 0..k {
                for i in 0..n_xi {
                    match (w_vars[t][kt][i], w_vars[t - 1][kp][i]) {
                        (Some(cur), Some(prev)) => {
                            m.add_constraint(vec![(cur, 1.0), (prev, -1.0)], Relation::Ge, 0.0)
                        }
                        (None, Some(prev)) => m.add_constraint(vec![(prev, 1.0)], Relation::Le, 0.0),
                        _ => {}
                    }
                }
            }
        }
    }

    // Budget rows per full tuple.
    let full_tuples = tuples(k, t_final);
    for tuple in &full_tuples {
        for row_i in 0..ms.rhs.len() {
            let mut row = LinExpr::new();
            for t in 0..t_final {
                let kk = tuple[t];
                for i in 0..n_xi {
                    if let Some(wv) = w_vars[t][kk][i] {
                        row.add_term(wv, ms.cons_w[t][(row_i, i)]);
                    }
                }
                for (j, &yv) in y_vars[t][kk].iter().enumerate() {
                    row.add_term(yv, ms.cons_y[t][(row_i, j)]);
                }
            }
            m.add_constraint_expr(row, Relation::Le, ms.rhs[row_i]);
        }
    }

    // Dual chain: alpha per full tuple; beta, gamma per node path.
    let alpha: Vec<VarId> =
        (0..full_tuples.len()).map(|i| m.add_continuous(format!("alpha[{i}]"), 0.0, 1.0)).collect();
    m.add_constraint(alpha.iter().map(|&a| (a, 1.0)).collect(), Relation::Eq, 1.0);

    let mut beta: Vec<HashMap<Vec<usize>, Vec<VarId>>> = Vec::with_capacity(t_final);
    let mut gamma_bar: Vec<HashMap<Vec<usize>, Vec<Option<VarId>>>> = Vec::with_capacity(t_final);
    for t in 0..t_final {
        let mut b_map = HashMap::new();
        let mut g_map = HashMap::new();
        for path in tuples(k, t + 1) {
            let b: Vec<VarId> = (0..r)
                .map(|rr| m.add_continuous(format!("beta{t}_{path:?}[{rr}]"), 0.0, big_m))
                .collect();
            b_map.insert(path.clone(), b);
            if t >= 1 {
                // gamma^{t,path} multiplied by w^{t-1,k_{t-1}}.
                let prev_k = path[t - 1];
                let g: Vec<Option<VarId>> = (0..n_xi)
                    .map(|i| {
                        w_vars[t - 1][prev_k][i].map(|wv| {
                            let gv = m.add_continuous(format!("gam{t}_{path:?}[{i}]"), -big_m, big_m);
                            m.add_product_bin_cont(format!("gb{t}_{path:?}[{i}]"), wv, gv, -big_m, big_m)
                        })
                    })
                    .map(|o| o.transpose())
                    .collect::<Result<_, _>>()?;
                g_map.insert(path, g);
            }
        }
        beta.push(b_map);
        gamma_bar.push(g_map);
    }

    // Stage-1 rows: A' beta^{1,k1} = sum_{k2} w^1 o gamma^{2,k1 k2}.
    for k1 in 0..k {
        for i in 0..n_xi {
            let mut row = LinExpr::new();
            for rr in 0..r {
                row.add_term(beta[0][&vec![k1]][rr], ms.xi.a[(rr, i)]);
            }
            for k2 in 0..k {
                if let Some(g) = gamma_bar[1][&vec![k1, k2]][i] {
                    row.add_term(g, -1.0);
                }
            }
            m.add_constraint_expr(row, Relation::Eq, 0.0);
        }
    }

    // Interior rows (t = 2..T-1): A' beta^{t,path} + w^{t-1} o gamma^{t,path}
    //   = sum_{k_{t+1}} w^t o gamma^{t+1,path k_{t+1}}.
    for t in 1..t_final - 1 {
        for path in tuples(k, t + 1) {
            for i in 0..n_xi {
                let mut row = LinExpr::new();
                for rr in 0..r {
                    row.add_term(beta[t][&path][rr], ms.xi.a[(rr, i)]);
                }
                if let Some(g) = gamma_bar[t][&path][i] {
                    row.add_term(g, 1.0);
                }
                for knext in 0..k {
                    let mut child = path.clone();
                    child.push(knext);
                    if let Some(g) = gamma_bar[t + 1][&child][i] {
                        row.add_term(g, -1.0);
                    }
                }
                m.add_constraint_expr(row, Relation::Eq, 0.0);
            }
        }
    }

    // Terminal rows: A' beta^{T,tuple} + w^{T-1} o gamma^{T,tuple}
    //   = alpha_tuple sum_t (D^t w^{t,k_t} + Q^t y^{t,k_t}).
    // Products alpha * w and alpha * y are cached per (alpha, binary) pair.
    let mut prod_cache: HashMap<(VarId, VarId), VarId> = HashMap::new();
    for (ti, tuple) in full_tuples.iter().enumerate() {
        let a = alpha[ti];
        let mut cached = |m: &mut MilpModel, bin: VarId| -> Result<VarId, KAdaptError> {
            if let Some(&p) = prod_cache.get(&(a, bin)) {
                return Ok(p);
            }
            let p = m.add_product_bin_cont(format!("ap[{ti}.{bin}]"), bin, a, 0.0, 1.0)?;
            prod_cache.insert((a, bin), p);
            Ok(p)
        };
        for i in 0..n_xi {
            let mut row = LinExpr::new();
            for rr in 0..r {
                row.add_term(beta[t_final - 1][tuple][rr], ms.xi.a[(rr, i)]);
            }
            if let Some(g) = gamma_bar[t_final - 1][tuple][i] {
                row.add_term(g, 1.0);
            }
            for t in 0..t_final {
                let kk = tuple[t];
                for j in 0..n_xi {
                    let c = ms.cost_w[t][(i, j)];
                    if c != 0.0 {
                        if let Some(wv) = w_vars[t][kk][j] {
                            let p = cached(&mut m, wv)?;
                            row.add_term(p, -c);
                        }
                    }
                }
                for (j, &yv) in y_vars[t][kk].iter().enumerate() {
                    let c = ms.cost_y[t][(i, j)];
                    if c != 0.0 {
                        let p = cached(&mut m, yv)?;
                        row.add_term(p, -c);
                    }
                }
            }
            m.add_constraint_expr(row, Relation::Eq, 0.0);
        }
    }

    // Objective: sum over all node paths of b' beta.
    let mut obj = LinExpr::new();
    for t in 0..t_final {
        for (_, b) in beta[t].iter() {
            for rr in 0..r {
                obj.add_term(b[rr], ms.xi.b[rr]);
            }
        }
    }
    let obj = obj.compact();
    m.set_objective(obj.terms, obj.constant);

    Ok((m, MsVarMap { w_vars, y_vars }))
}

/// Solves the multistage model and returns the per-stage policy trees.
pub fn solve_multistage(
    ms: &MultistageInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<MultistageSolution, KAdaptError> {
    let (model, map) = build_multistage_model(ms, k, opts)?;
    let milp = solve_milp(&model, opts)?;
    let status = milp.status;
    if status != SolveStatus::Optimal && (milp.primal.is_empty() || status == SolveStatus::Infeasible) {
        return Ok(MultistageSolution {
            status,
            value: f64::INFINITY,
            w: Vec::new(),
            y: Vec::new(),
            gap: milp.gap,
            nodes: milp.nodes,
            method: SolveMethod::Mblp,
        });
    }
    let p = &milp.primal;
    let w: Vec<Vec<Vec<u8>>> = map
        .w_vars
        .iter()
        .map(|per_k| per_k.iter().map(|row| row.iter().map(|v| v.map_or(0, |id| u8::from(p[id] >= 0.5))).collect()).collect())
        .collect();
    let y: Vec<Vec<Vec<u8>>> = map
        .y_vars
        .iter()
        .map(|per_k| per_k.iter().map(|row| super::extract_binary(p, row)).collect())
        .collect();
    Ok(MultistageSolution { status, value: milp.value, w, y, gap: milp.gap, nodes: milp.nodes, method: SolveMethod::Mblp })
}

/// Exact value of fixed multistage policy trees: the epigraph LP over one
/// scenario variable per branch node, linked stage to stage through the
/// chosen information bases. Exponential in T, intended for desk-scale
/// verification.
pub fn evaluate_multistage_fixed(
    ms: &MultistageInstance,
    w: &[Vec<Vec<u8>>],
    y: &[Vec<Vec<u8>>],
    opts: &SolverOptions,
) -> Result<f64, KAdaptError> {
    ms.check()?;
    let t_final = ms.periods;
    let k = w[0].len();
    // Deterministic budget feasibility over every tuple.
    for tuple in tuples(k, t_final) {
        for row_i in 0..ms.rhs.len() {
            let mut lhs = 0.0;
            for t in 0..t_final {
                let kk = tuple[t];
                for i in 0..ms.n_xi() {
                    if w[t][kk][i] == 1 {
                        lhs += ms.cons_w[t][(row_i, i)];
                    }
                }
                for (j, &yv) in y[t][kk].iter().enumerate() {
                    if yv == 1 {
                        lhs += ms.cons_y[t][(row_i, j)];
                    }
                }
            }
            if lhs > ms.rhs[row_i] + opts.lp_feas_tol {
                return Ok(f64::INFINITY);
            }
        }
    }

    let mut m = MilpModel::new();
    let tau = m.add_continuous("tau", f64::NEG_INFINITY, f64::INFINITY);
    // xi vars per node path (t, k_1..k_{t+1}).
    let mut xi_vars: Vec<HashMap<Vec<usize>, Vec<VarId>>> = Vec::with_capacity(t_final);
    for t in 0..t_final {
        let mut map = HashMap::new();
        for path in tuples(k, t + 1) {
            let inst_like = DdidInstance {
                sense: crate::model::Sense::Minimize,
                cost_x: Matrix::zeros(ms.n_xi(), 0),
                cost_w: Matrix::zeros(ms.n_xi(), ms.n_xi()),
                cost_y: Matrix::zeros(ms.n_xi(), 0),
                cons_x: Matrix::zeros(0, 0),
                cons_w: Matrix::zeros(0, ms.n_xi()),
                cons_y: Matrix::zeros(0, 0),
                rhs: RhsMode::Constant(vec![]),
                xi: ms.xi.clone(),
                set_x: BinaryFeasibleSet::free(0),
                set_w: BinaryFeasibleSet::free(ms.n_xi()),
                set_y: BinaryFeasibleSet::free(0),
            };
            let vars = super::add_xi_vars(&mut m, &inst_like, &format!("_{t}_{path:?}"));
            map.insert(path, vars);
        }
        xi_vars.push(map);
    }
    // Linking: for t >= 1, coordinates observed by w^{t-1,k_{t-1}} agree with
    // the parent node's scenario.
    for t in 1..t_final {
        for path in tuples(k, t + 1) {
            let parent: Vec<usize> = path[..t].to_vec();
            let prev_k = path[t - 1];
            for i in 0..ms.n_xi() {
                if w[t - 1][prev_k][i] == 1 {
                    m.add_constraint(
                        vec![(xi_vars[t][&path][i], 1.0), (xi_vars[t - 1][&parent][i], -1.0)],
                        Relation::Eq,
                        0.0,
                    );
                }
            }
        }
    }
    // tau <= objective along every full tuple, evaluated at the leaf scenario.
    for tuple in tuples(k, t_final) {
        let mut coeffs = vec![0.0; ms.n_xi()];
        for t in 0..t_final {
            let kk = tuple[t];
            for i in 0..ms.n_xi() {
                for j in 0..ms.n_xi() {
                    if w[t][kk][j] == 1 {
                        coeffs[i] += ms.cost_w[t][(i, j)];
                    }
                }
                for (j, &yv) in y[t][kk].iter().enumerate() {
                    if yv == 1 {
                        coeffs[i] += ms.cost_y[t][(i, j)];
                    }
                }
            }
        }
        let leaf = &xi_vars[t_final - 1][&tuple];
        let mut row = LinExpr::term(tau, 1.0);
        for (i, c) in coeffs.iter().enumerate() {
            row.add_term(leaf[i], -c);
        }
        m.add_constraint_expr(row, Relation::Le, 0.0);
    }
    m.set_objective(vec![(tau, -1.0)], 0.0);
    let sol = crate::milp::solve_lp(&m, opts)?;
    match sol.status {
        SolveStatus::Optimal => Ok(-sol.value),
        s => Err(KAdaptError::LpFailed(s)),
    }
}

/// Maps a two-stage objective-uncertainty instance onto a two-period
/// multistage one: period 1 carries (w, x) and period 2 the recourse.
pub fn two_stage_as_multistage(inst: &DdidInstance) -> Result<MultistageInstance, KAdaptError> {
    let canon = inst.canonicalize();
    let RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constant right-hand side required".into()));
    };
    let n = canon.n_xi();
    Ok(MultistageInstance {
        periods: 2,
        cost_w: vec![canon.cost_w.clone(), Matrix::zeros(n, n)],
        cost_y: vec![canon.cost_x.clone(), canon.cost_y.clone()],
        cons_w: vec![canon.cons_w.clone(), Matrix::zeros(h.len(), n)],
        cons_y: vec![canon.cons_x.clone(), canon.cons_y.clone()],
        rhs: h.clone(),
        xi: canon.xi.clone(),
        set_w: vec![canon.set_w.clone(), BinaryFeasibleSet::free(n).mask_zero(&canon.xi.observable_mask)],
        set_y: vec![canon.set_x.clone(), canon.set_y.clone()],
        w0: vec![0; n],
    })
}
