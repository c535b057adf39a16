//! Piecewise-linear convex objectives: the worst-case-regret transformation
//! and the monolithic MBLP over piece-index tuples.
//!
//! The objective is `max_i xi' C^i x + xi' D^i w + xi' Q^i y`; assigning a
//! piece to each of the K policies yields one dual block per index tuple in
//! `I^K`, with an epigraph variable bounding every block's dual objective.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::milp::{LinExpr, MilpModel, Relation, VarId};
use crate::model::{DdidInstance, RhsMode, Sense, SolverOptions};
use crate::speedups;

use super::{add_stage_vars, KAdaptError, StageVars};

/// One linear piece of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlPiece {
    /// n_xi x n_x
    pub c: Matrix,
    /// n_xi x n_xi
    pub d: Matrix,
    /// n_xi x n_y
    pub q: Matrix,
}

/// Max-of-linear-pieces objective replacing the instance's bilinear one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlObjective {
    pub pieces: Vec<PwlPiece>,
}

impl PwlObjective {
    pub fn num_pieces(&self) -> usize {
        self.pieces.len()
    }

    /// Coefficient vector (over xi) of piece `p` at fixed binary decisions.
    pub fn piece_coeffs(&self, p: usize, x: &[u8], w: &[u8], y: &[u8]) -> Vec<f64> {
        let piece = &self.pieces[p];
        let mut c = piece.c.mul_binary(x);
        for (l, v) in c.iter_mut().zip(piece.d.mul_binary(w)) {
            *l += v;
        }
        for (l, v) in c.iter_mut().zip(piece.q.mul_binary(y)) {
            *l += v;
        }
        c
    }

    /// `max_p xi' (C^p x + D^p w + Q^p y)` at a concrete scenario.
    pub fn value_at(&self, xi: &[f64], x: &[u8], w: &[u8], y: &[u8]) -> f64 {
        (0..self.pieces.len())
            .map(|p| crate::matrix::dot(&self.piece_coeffs(p, x, w, y), xi))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn dims_match(&self, inst: &DdidInstance) -> bool {
        self.pieces.iter().all(|p| {
            p.c.rows == inst.n_xi()
                && p.c.cols == inst.n_x()
                && p.d.rows == inst.n_xi()
                && p.d.cols == inst.n_xi()
                && p.q.rows == inst.n_xi()
                && p.q.cols == inst.n_y()
        })
    }
}

/// Index tuple assigning one piece to each policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PieceIndex {
    pub i: Vec<usize>,
}

/// Enumerates `I^K` in lexicographic order, honoring the cap.
pub fn enumerate_piece_tuples(num_pieces: usize, k: usize, cap: usize) -> Result<Vec<PieceIndex>, KAdaptError> {
    let mut total: usize = 1;
    for _ in 0..k {
        total = total
            .checked_mul(num_pieces)
            .filter(|&t| t <= cap)
            .ok_or_else(|| KAdaptError::IndexCapExceeded(format!("|I|^K = {num_pieces}^{k} > {cap}")))?;
    }
    let mut out = Vec::with_capacity(total);
    let mut cur = vec![0usize; k];
    loop {
        out.push(PieceIndex { i: cur.clone() });
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < num_pieces {
                break;
            }
            cur[pos] = 0;
            if pos == 0 {
                return Ok(out);
            }
        }
    }
}

/// Rewrites a worst-case absolute regret problem over a utility instance as a
/// piecewise-linear objective. Each objective block must either vanish or
/// have its decision set equal to the unit simplex, so that best-in-hindsight
/// decisions range over unit vectors.
pub fn wcar_to_pwl(inst: &DdidInstance) -> Result<PwlObjective, KAdaptError> {
    if inst.sense != Sense::Maximize {
        return Err(KAdaptError::Rejected(
            "worst-case regret is defined for a utility instance (maximize sense)".into(),
        ));
    }
    let premise = |m: &Matrix, set: &crate::model::BinaryFeasibleSet, name: &str| -> Result<bool, KAdaptError> {
        if m.is_zero() {
            Ok(false)
        } else if speedups::is_unit_simplex(set) {
            Ok(true)
        } else {
            Err(KAdaptError::Rejected(format!(
                "regret transformation requires {name} to be zero or its decision set the unit simplex"
            )))
        }
    };
    let use_x = premise(&inst.cost_x, &inst.set_x, "the x objective block")?;
    let use_w = premise(&inst.cost_w, &inst.set_w, "the w objective block")?;
    let use_y = premise(&inst.cost_y, &inst.set_y, "the y objective block")?;

    let n_xi = inst.n_xi();
    let unit_cols = |m: &Matrix| -> Vec<Vec<f64>> {
        (0..m.cols)
            .map(|j| (0..m.rows).map(|i| m[(i, j)]).collect())
            .collect()
    };
    let x_choices: Vec<Option<Vec<f64>>> = if use_x {
        unit_cols(&inst.cost_x).into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let w_choices: Vec<Option<Vec<f64>>> = if use_w {
        unit_cols(&inst.cost_w).into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let y_choices: Vec<Option<Vec<f64>>> = if use_y {
        unit_cols(&inst.cost_y).into_iter().map(Some).collect()
    } else {
        vec![None]
    };

    // Piece for hindsight choice (i, j, l): the hindsight utility spread over
    // the corresponding simplex identity, minus the utility actually earned.
    let mut pieces = Vec::new();
    for cx in &x_choices {
        for dw in &w_choices {
            for qy in &y_choices {
                let mut c = inst.cost_x.scale(-1.0);
                let mut d = inst.cost_w.scale(-1.0);
                let mut q = inst.cost_y.scale(-1.0);
                let mut hindsight = vec![0.0; n_xi];
                if let Some(col) = cx {
                    for (h, v) in hindsight.iter_mut().zip(col) {
                        *h += v;
                    }
                }
                if let Some(col) = dw {
                    for (h, v) in hindsight.iter_mut().zip(col) {
                        *h += v;
                    }
                }
                if let Some(col) = qy {
                    for (h, v) in hindsight.iter_mut().zip(col) {
                        *h += v;
                    }
                }
                // Spread the constant-in-decisions hindsight term over one of
                // the simplex groups (1'x = 1 etc.); any nonzero group works,
                // and with all groups zero the hindsight term is zero too.
                if use_y {
                    for i in 0..n_xi {
                        for j in 0..q.cols {
                            q[(i, j)] += hindsight[i];
                        }
                    }
                } else if use_w {
                    for i in 0..n_xi {
                        for j in 0..d.cols {
                            d[(i, j)] += hindsight[i];
                        }
                    }
                } else if use_x {
                    for i in 0..n_xi {
                        for j in 0..c.cols {
                            c[(i, j)] += hindsight[i];
                        }
                    }
                }
                pieces.push(PwlPiece { c, d, q });
            }
        }
    }
    Ok(PwlObjective { pieces })
}

pub(crate) struct PwlVarMap {
    pub stage: StageVars,
    pub big_m: f64,
}

/// Builds the monolithic MBLP: one dual block per piece-index tuple.
pub fn build_pwl_monolithic(
    inst: &DdidInstance,
    pwl: &PwlObjective,
    k: usize,
    opts: &SolverOptions,
) -> Result<MilpModel, KAdaptError> {
    let canon = regret_host(inst)?;
    Ok(build_pwl_model(&canon, pwl, k, opts)?.0)
}

/// The host instance for a piecewise-linear solve must be minimize-sense with
/// a constant right-hand side; its own cost matrices are ignored.
pub(crate) fn regret_host(inst: &DdidInstance) -> Result<DdidInstance, KAdaptError> {
    if !inst.rhs.is_constant() {
        return Err(KAdaptError::Rejected(
            "piecewise-linear objectives require a constant right-hand side".into(),
        ));
    }
    Ok(inst.canonicalize())
}

pub(crate) fn build_pwl_model(
    canon: &DdidInstance,
    pwl: &PwlObjective,
    k: usize,
    opts: &SolverOptions,
) -> Result<(MilpModel, PwlVarMap), KAdaptError> {
    let tuples = enumerate_piece_tuples(pwl.num_pieces(), k, opts.piece_cap)?;
    build_pwl_model_for_tuples(canon, pwl, k, &tuples, opts)
}

/// Shared by the monolithic model (all tuples) and the CCG master (active
/// tuples only).
pub(crate) fn build_pwl_model_for_tuples(
    canon: &DdidInstance,
    pwl: &PwlObjective,
    k: usize,
    tuples: &[PieceIndex],
    opts: &SolverOptions,
) -> Result<(MilpModel, PwlVarMap), KAdaptError> {
    opts.validate().map_err(KAdaptError::BadOptions)?;
    if k == 0 {
        return Err(KAdaptError::Rejected("K must be at least 1".into()));
    }
    if pwl.pieces.is_empty() || !pwl.dims_match(canon) {
        return Err(KAdaptError::Rejected("piecewise objective is empty or dimensioned wrong".into()));
    }
    let RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected("constant right-hand side required".into()));
    };
    let bounds = canon.xi.coordinate_bounds(opts).map_err(KAdaptError::Uncertainty)?;
    let big_m = opts.big_m.unwrap_or_else(|| canon.derived_big_m(&bounds));
    let n_xi = canon.n_xi();
    let r = canon.xi.num_rows();

    let mut m = MilpModel::new();
    let stage = add_stage_vars(&mut m, canon, k);
    let tau = m.add_continuous("tau", -big_m, big_m);
    m.set_objective(vec![(tau, 1.0)], 0.0);

    // Deterministic stage rows, shared across tuples.
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

    for (bi, tuple) in tuples.iter().enumerate() {
        let alpha: Vec<VarId> = (0..k).map(|kk| m.add_continuous(format!("al{kk}[{bi}]"), 0.0, 1.0)).collect();
        let beta: Vec<VarId> = (0..r).map(|rr| m.add_continuous(format!("be[{bi}.{rr}]"), 0.0, big_m)).collect();
        let beta_k: Vec<Vec<VarId>> = (0..k)
            .map(|kk| (0..r).map(|rr| m.add_continuous(format!("be{kk}[{bi}.{rr}]"), 0.0, big_m)).collect())
            .collect();
        let mut gamma_bar: Vec<Vec<Option<VarId>>> = Vec::with_capacity(k);
        for kk in 0..k {
            let mut row = Vec::with_capacity(n_xi);
            for i in 0..n_xi {
                match stage.w[i] {
                    Some(wv) => {
                        let g = m.add_continuous(format!("ga{kk}[{bi}.{i}]"), -big_m, big_m);
                        row.push(Some(m.add_product_bin_cont(format!("gb{kk}[{bi}.{i}]"), wv, g, -big_m, big_m)?));
                    }
                    None => row.push(None),
                }
            }
            gamma_bar.push(row);
        }
        // products alpha_k * (x, w, y^k) for the piece-weighted objective rows
        let mut x_bar: Vec<Vec<VarId>> = Vec::with_capacity(k);
        let mut w_bar: Vec<Vec<Option<VarId>>> = Vec::with_capacity(k);
        let mut y_bar: Vec<Vec<VarId>> = Vec::with_capacity(k);
        for kk in 0..k {
            x_bar.push(
                stage
                    .x
                    .iter()
                    .enumerate()
                    .map(|(j, &xv)| m.add_product_bin_cont(format!("xb{kk}[{bi}.{j}]"), xv, alpha[kk], 0.0, 1.0))
                    .collect::<Result<_, _>>()?,
            );
            w_bar.push(
                stage
                    .w
                    .iter()
                    .enumerate()
                    .map(|(i, wv)| {
                        wv.map(|wv| m.add_product_bin_cont(format!("wb{kk}[{bi}.{i}]"), wv, alpha[kk], 0.0, 1.0))
                            .transpose()
                    })
                    .collect::<Result<_, _>>()?,
            );
            y_bar.push(
                stage.policies[kk]
                    .iter()
                    .enumerate()
                    .map(|(j, &yv)| m.add_product_bin_cont(format!("yb{kk}[{bi}.{j}]"), yv, alpha[kk], 0.0, 1.0))
                    .collect::<Result<_, _>>()?,
            );
        }

        // tau >= b' beta^i + sum_k b' beta^{i,k}
        let mut row = LinExpr::term(tau, 1.0);
        for rr in 0..r {
            row.add_term(beta[rr], -canon.xi.b[rr]);
            for bk in &beta_k {
                row.add_term(bk[rr], -canon.xi.b[rr]);
            }
        }
        m.add_constraint_expr(row, Relation::Ge, 0.0);

        // 1' alpha^i = 1
        m.add_constraint(alpha.iter().map(|&a| (a, 1.0)).collect(), Relation::Eq, 1.0);

        // A' beta^{i,k} + w o gamma^{i,k} = alpha_k (C^{i_k} x + D^{i_k} w + Q^{i_k} y^k)
        for kk in 0..k {
            let piece = &pwl.pieces[tuple.i[kk]];
            for i in 0..n_xi {
                let mut row = LinExpr::new();
                for rr in 0..r {
                    row.add_term(beta_k[kk][rr], canon.xi.a[(rr, i)]);
                }
                if let Some(g) = gamma_bar[kk][i] {
                    row.add_term(g, 1.0);
                }
                for (j, &xb) in x_bar[kk].iter().enumerate() {
                    row.add_term(xb, -piece.c[(i, j)]);
                }
                for (j, wb) in w_bar[kk].iter().enumerate() {
                    if let Some(wb) = *wb {
                        row.add_term(wb, -piece.d[(i, j)]);
                    }
                }
                for (j, &yb) in y_bar[kk].iter().enumerate() {
                    row.add_term(yb, -piece.q[(i, j)]);
                }
                m.add_constraint_expr(row, Relation::Eq, 0.0);
            }
        }

        // A' beta^i = sum_k w o gamma^{i,k}
        for i in 0..n_xi {
            let mut row = LinExpr::new();
            for rr in 0..r {
                row.add_term(beta[rr], canon.xi.a[(rr, i)]);
            }
            for gb in &gamma_bar {
                if let Some(g) = gb[i] {
                    row.add_term(g, -1.0);
                }
            }
            m.add_constraint_expr(row, Relation::Eq, 0.0);
        }
    }

    if opts.symmetry_breaking.enabled(k) && k >= 2 {
        speedups::add_auto_symmetry_breaking(&mut m, canon, &stage.policies);
    }

    Ok((m, PwlVarMap { stage, big_m }))
}
