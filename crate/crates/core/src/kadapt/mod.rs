//! K-adaptability reformulations and solvers.
//!
//! `K` candidate recourse policies are fixed here-and-now; after the chosen
//! coordinates of `xi` are revealed, the best robustly feasible policy is
//! implemented. Submodules cover objective uncertainty (dualized to an MBLP),
//! constraint uncertainty (violation-indexed cover plus epsilon inner
//! approximation), piecewise-linear convex objectives (monolithic MBLP and
//! column-and-constraint generation), and the multistage variant.

pub mod ccg;
pub mod constraint;
pub mod multistage;
pub mod objective;
pub mod pwl;

use serde::{Deserialize, Serialize};

use crate::milp::{LinExpr, MilpModel, Relation, SolveStatus, VarId};
use crate::model::{DdidInstance, SolverOptions};

/// Diagnostic dual variables of the objective-uncertainty reformulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualBlock {
    /// Policy mixture weights: nonnegative, summing to one.
    pub alpha: Vec<f64>,
    /// Multipliers of the shared-scenario rows (length R).
    pub beta: Vec<f64>,
    /// Per-policy multipliers (K x R).
    pub beta_k: Vec<Vec<f64>>,
    /// Per-policy free multipliers on observed coordinates (K x n_xi).
    pub gamma_k: Vec<Vec<f64>>,
}

/// Which route produced the solution: the assembled mixed-binary model or
/// exact enumeration of first-stage decisions with per-block LP evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Mblp,
    Enumeration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KAdaptSolution {
    pub status: SolveStatus,
    /// Objective in the instance's original sense; +/- infinity when
    /// infeasible.
    #[serde(with = "extended_f64")]
    pub value: f64,
    pub x: Vec<u8>,
    pub w: Vec<u8>,
    pub policies: Vec<Vec<u8>>,
    pub duals: Option<DualBlock>,
    #[serde(with = "extended_f64")]
    pub gap: f64,
    pub nodes: usize,
    pub method: SolveMethod,
    /// Post-solve validator findings (binding big-M, inexact linearization).
    pub warnings: Vec<String>,
}

/// JSON encoding for values that may be infinite: numbers stay numbers,
/// infinities become the strings "inf" / "-inf".
pub(crate) mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("bad extended float {other:?}"))),
            },
        }
    }
}

/// Feasible range of one observable coordinate given already-fixed answers:
/// two bound LPs over the slice of the uncertainty set.
pub fn observed_coordinate_range(
    inst: &DdidInstance,
    observed: &[(usize, f64)],
    coord: usize,
    opts: &SolverOptions,
) -> Result<(f64, f64), KAdaptError> {
    let mut lohi = (0.0, 0.0);
    for (slot, dir) in [(0usize, 1.0f64), (1, -1.0)] {
        let mut m = MilpModel::new();
        let xi = add_xi_vars(&mut m, inst, "");
        for &(i, v) in observed {
            m.add_constraint(vec![(xi[i], 1.0)], Relation::Eq, v);
        }
        m.set_objective(vec![(xi[coord], dir)], 0.0);
        let sol = crate::milp::solve_lp(&m, opts)?;
        if sol.status != SolveStatus::Optimal {
            return Err(KAdaptError::InconsistentObservation(format!(
                "slice bound LP ended with {:?}",
                sol.status
            )));
        }
        if slot == 0 {
            lohi.0 = sol.value;
        } else {
            lohi.1 = -sol.value;
        }
    }
    Ok(lohi)
}

impl KAdaptSolution {
    pub fn infeasible(inst: &DdidInstance, k: usize, method: SolveMethod) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            value: inst.report_sign() * f64::INFINITY,
            x: vec![0; inst.n_x()],
            w: vec![0; inst.n_xi()],
            policies: vec![vec![0; inst.n_y()]; k],
            duals: None,
            gap: 0.0,
            nodes: 0,
            method,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KAdaptError {
    #[error("invalid solver options: {0}")]
    BadOptions(String),
    #[error("instance rejected: {0}")]
    Rejected(String),
    #[error("uncertainty set: {0}")]
    Uncertainty(String),
    #[error("enumeration exceeds the configured cap ({0}); reduce K or the instance size")]
    EnumerationTooLarge(String),
    #[error("index family exceeds the configured cap ({0}); reduce K")]
    IndexCapExceeded(String),
    #[error("inconsistent observation: {0}")]
    InconsistentObservation(String),
    #[error("milp backend: {0}")]
    Milp(#[from] crate::milp::MilpError),
    #[error("lp solve ended with status {0:?}")]
    LpFailed(SolveStatus),
}

/// Adds binary variables for `x`, `w`, `y^1..y^K` and their feasible-set
/// membership rows. Masked coordinates of `w` are fixed to zero and get no
/// variable.
pub(crate) struct StageVars {
    pub x: Vec<VarId>,
    pub w: Vec<Option<VarId>>,
    pub policies: Vec<Vec<VarId>>,
}

pub(crate) fn add_stage_vars(model: &mut MilpModel, inst: &DdidInstance, k: usize) -> StageVars {
    let x: Vec<VarId> = (0..inst.n_x()).map(|j| model.add_binary(format!("x[{j}]"))).collect();
    let w: Vec<Option<VarId>> = (0..inst.n_xi())
        .map(|i| inst.xi.observable_mask[i].then(|| model.add_binary(format!("w[{i}]"))))
        .collect();
    let policies: Vec<Vec<VarId>> = (0..k)
        .map(|kk| (0..inst.n_y()).map(|j| model.add_binary(format!("y{}[{j}]", kk + 1))).collect())
        .collect();
    inst.set_x.apply_to_model(model, &x.iter().copied().map(Some).collect::<Vec<_>>());
    inst.set_w.apply_to_model(model, &w);
    for yk in &policies {
        inst.set_y.apply_to_model(model, &yk.iter().copied().map(Some).collect::<Vec<_>>());
    }
    let x_map: Vec<VarId> = x;
    StageVars { x: x_map, w, policies }
}

pub(crate) fn extract_binary(primal: &[f64], ids: &[VarId]) -> Vec<u8> {
    ids.iter().map(|&v| u8::from(primal[v] >= 0.5)).collect()
}

pub(crate) fn extract_w(primal: &[f64], ids: &[Option<VarId>]) -> Vec<u8> {
    ids.iter().map(|v| v.map_or(0, |id| u8::from(primal[id] >= 0.5))).collect()
}

/// Adds `A xi <= b` rows for a fresh copy of the uncertainty set, returning
/// the coordinate variable ids.
pub(crate) fn add_xi_vars(model: &mut MilpModel, inst: &DdidInstance, tag: &str) -> Vec<VarId> {
    let vars: Vec<VarId> =
        (0..inst.n_xi()).map(|i| model.add_continuous(format!("xi{tag}[{i}]"), f64::NEG_INFINITY, f64::INFINITY)).collect();
    for r in 0..inst.xi.a.rows {
        let terms: Vec<_> = inst
            .xi
            .a
            .row(r)
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (vars[i], *c))
            .collect();
        model.add_constraint(terms, Relation::Le, inst.xi.b[r]);
    }
    vars
}

/// Worst-case cost of a fixed decision tuple under objective uncertainty
/// (single epigraph LP over `(tau, xi_bar, xi^1..xi^K)`). Returns the value in
/// the instance's original sense; +infinity (min sense) when no policy
/// satisfies the deterministic constraints.
pub fn evaluate_policies_lp(
    inst: &DdidInstance,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<f64, KAdaptError> {
    let canon = inst.canonicalize();
    let v = evaluate_policies_lp_min(&canon, x, w, policies, opts)?;
    Ok(inst.report_sign() * v)
}

/// Minimize-sense worst-case cost of fixed decisions; the Obs-2 epigraph LP.
pub(crate) fn evaluate_policies_lp_min(
    canon: &DdidInstance,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<f64, KAdaptError> {
    let crate::model::RhsMode::Constant(h) = &canon.rhs else {
        return Err(KAdaptError::Rejected("evaluate_policies_lp requires a constant right-hand side".into()));
    };
    let feasible: Vec<&Vec<u8>> = policies
        .iter()
        .filter(|y| {
            canon
                .stage_lhs(x, w, y)
                .iter()
                .zip(h)
                .all(|(lhs, rhs)| *lhs <= rhs + opts.lp_feas_tol)
        })
        .collect();
    if feasible.is_empty() {
        return Ok(f64::INFINITY);
    }

    let mut m = MilpModel::new();
    let tau = m.add_continuous("tau", f64::NEG_INFINITY, f64::INFINITY);
    let xi_bar = add_xi_vars(&mut m, canon, "_bar");
    for (kk, y) in feasible.iter().enumerate() {
        let xi_k = add_xi_vars(&mut m, canon, &format!("_{kk}"));
        let coeffs = canon.objective_coeffs(x, w, y);
        // tau <= coeffs' xi_k
        let mut row = LinExpr::term(tau, 1.0);
        for (i, c) in coeffs.iter().enumerate() {
            row.add_term(xi_k[i], -c);
        }
        m.add_constraint_expr(row, Relation::Le, 0.0);
        // observed coordinates agree with the shared scenario
        for i in 0..canon.n_xi() {
            if w[i] == 1 {
                m.add_constraint(vec![(xi_k[i], 1.0), (xi_bar[i], -1.0)], Relation::Eq, 0.0);
            }
        }
    }
    m.set_objective(vec![(tau, -1.0)], 0.0);
    let sol = crate::milp::solve_lp(&m, opts)?;
    match sol.status {
        SolveStatus::Optimal => Ok(-sol.value),
        s => Err(KAdaptError::LpFailed(s)),
    }
}

/// Picks the policy to implement once the observed coordinates are revealed:
/// for each k, the worst case over the observation-consistent slice is solved
/// by LP and the canonical-sense argmin is returned (ties to the lowest k).
pub fn select_recourse_policy(
    inst: &DdidInstance,
    sol: &KAdaptSolution,
    observed: &[(usize, f64)],
    opts: &SolverOptions,
) -> Result<usize, KAdaptError> {
    let canon = inst.canonicalize();
    for &(i, _) in observed {
        if i >= canon.n_xi() || sol.w[i] != 1 {
            return Err(KAdaptError::InconsistentObservation(format!(
                "coordinate {i} was not selected for observation"
            )));
        }
    }
    for i in 0..canon.n_xi() {
        if sol.w[i] == 1 && !observed.iter().any(|&(j, _)| j == i) {
            return Err(KAdaptError::InconsistentObservation(format!("missing value for observed coordinate {i}")));
        }
    }

    // The slice must be non-empty.
    let mut feas = MilpModel::new();
    let xi = add_xi_vars(&mut feas, &canon, "");
    for &(i, v) in observed {
        feas.add_constraint(vec![(xi[i], 1.0)], Relation::Eq, v);
    }
    feas.set_objective(vec![], 0.0);
    let check = crate::milp::solve_lp(&feas, opts)?;
    if check.status == SolveStatus::Infeasible {
        return Err(KAdaptError::InconsistentObservation(
            "no scenario in the uncertainty set matches the observed values".into(),
        ));
    }

    let mut best: Option<(usize, f64)> = None;
    for (k, y) in sol.policies.iter().enumerate() {
        let coeffs = canon.objective_coeffs(&sol.x, &sol.w, y);
        let mut m = MilpModel::new();
        let xi = add_xi_vars(&mut m, &canon, "");
        for &(i, v) in observed {
            m.add_constraint(vec![(xi[i], 1.0)], Relation::Eq, v);
        }
        // maximize coeffs' xi
        m.set_objective(xi.iter().enumerate().map(|(i, &v)| (v, -coeffs[i])).collect(), 0.0);
        let lp = crate::milp::solve_lp(&m, opts)?;
        if lp.status != SolveStatus::Optimal {
            return Err(KAdaptError::LpFailed(lp.status));
        }
        let worst = -lp.value;
        if best.as_ref().map_or(true, |&(_, b)| worst < b - 1e-9) {
            best = Some((k, worst));
        }
    }
    Ok(best.expect("at least one policy").0)
}
