//! Self-contained dense LP / mixed-binary linear programming layer.
//!
//! Every reformulation in this crate bottoms out in a [`MilpModel`]: a plain
//! list of variables (continuous with finite or infinite bounds, or binary),
//! sparse linear constraints, and a sparse minimization objective. Models are
//! solved with a two-phase primal simplex ([`solve_lp`]) and a best-first
//! branch-and-bound ([`solve_milp`]), both deterministic.

mod bb;
mod export;
mod simplex;

pub use bb::{solve_milp, solve_milp_with_start, NODE_LIMIT_ENV};
pub use export::{export_lp_file, write_lp_string};
pub use simplex::solve_lp;

use serde::{Deserialize, Serialize};

use crate::model::SolverOptions;

/// Index of a variable in a [`MilpModel`].
pub type VarId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous { lower: f64, upper: f64 },
    Binary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Sparse linear constraint `sum(coef * var) rel rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowConstraint {
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Linear expression with a constant, used while assembling models.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(var: VarId, coef: f64) -> Self {
        Self { terms: vec![(var, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, var: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(v, c) in &other.terms {
            self.add_term(v, scale * c);
        }
        self.constant += scale * other.constant;
        self
    }

    /// Merges duplicate variable entries, summing coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|&(v, _)| v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    LimitReached,
    /// Simplex lost feasibility or hit a degenerate pivot it cannot resolve;
    /// never silently reported as Optimal.
    NumericalBreakdown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub value: f64,
    pub primal: Vec<f64>,
    /// One multiplier per model constraint; for a minimization problem binding
    /// `>=` rows carry nonnegative duals and `<=` rows nonpositive ones.
    pub duals: Vec<f64>,
    /// Objective value of the dual solution including bound contributions;
    /// equals `value` up to `lp_opt_tol` at Optimal.
    pub dual_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    pub value: f64,
    pub primal: Vec<f64>,
    /// Absolute gap between incumbent and best open bound at termination.
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum MilpError {
    #[error("model has binary variables; solve_lp requires a pure LP")]
    BinariesInLp,
    #[error("variable {0} out of range")]
    BadVariable(usize),
    #[error("product linearization requires finite bounds on the continuous factor (got [{0}, {1}])")]
    UnboundedProduct(f64, f64),
    #[error("inconsistent bounds on variable {name}: [{lower}, {upper}]")]
    BadBounds { name: String, lower: f64, upper: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<RowConstraint>,
    pub objective: Vec<(VarId, f64)>,
    pub objective_constant: f64,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable { name: name.into(), kind: VarKind::Continuous { lower, upper } });
        self.variables.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable { name: name.into(), kind: VarKind::Binary });
        self.variables.len() - 1
    }

    pub fn add_constraint(&mut self, terms: Vec<(VarId, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(RowConstraint { terms, relation, rhs });
    }

    /// Adds `expr rel rhs`, folding the expression constant into the rhs.
    pub fn add_constraint_expr(&mut self, expr: LinExpr, relation: Relation, rhs: f64) {
        let e = expr.compact();
        self.constraints.push(RowConstraint { terms: e.terms, relation, rhs: rhs - e.constant });
    }

    pub fn set_objective(&mut self, terms: Vec<(VarId, f64)>, constant: f64) {
        let e = LinExpr { terms, constant }.compact();
        self.objective = e.terms;
        self.objective_constant = e.constant;
    }

    pub fn add_objective_term(&mut self, var: VarId, coef: f64) {
        self.objective.push((var, coef));
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn has_binaries(&self) -> bool {
        self.variables.iter().any(|v| v.kind == VarKind::Binary)
    }

    pub fn bounds(&self, var: VarId) -> (f64, f64) {
        match self.variables[var].kind {
            VarKind::Continuous { lower, upper } => (lower, upper),
            VarKind::Binary => (0.0, 1.0),
        }
    }

    /// Introduces `p = z * c` for binary `z` and continuous `c` bounded in
    /// `[lo, hi]`, via the four rows
    /// `p <= c - lo (1-z)`, `p >= c - hi (1-z)`, `p <= hi z`, `p >= lo z`,
    /// which pin the product exactly for `z` in {0, 1}.
    pub fn add_product_bin_cont(
        &mut self,
        name: impl Into<String>,
        z: VarId,
        c: VarId,
        lo: f64,
        hi: f64,
    ) -> Result<VarId, MilpError> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(MilpError::UnboundedProduct(lo, hi));
        }
        if z >= self.variables.len() || c >= self.variables.len() {
            return Err(MilpError::BadVariable(z.max(c)));
        }
        let p = self.add_continuous(name, lo.min(0.0), hi.max(0.0));
        // p - c - lo z <= -lo
        self.add_constraint(vec![(p, 1.0), (c, -1.0), (z, -lo)], Relation::Le, -lo);
        // p - c - hi z >= -hi
        self.add_constraint(vec![(p, 1.0), (c, -1.0), (z, -hi)], Relation::Ge, -hi);
        // p - hi z <= 0
        self.add_constraint(vec![(p, 1.0), (z, -hi)], Relation::Le, 0.0);
        // p - lo z >= 0
        self.add_constraint(vec![(p, 1.0), (z, -lo)], Relation::Ge, 0.0);
        Ok(p)
    }

    /// Evaluates a linear expression at a primal point.
    pub fn eval_expr(&self, terms: &[(VarId, f64)], point: &[f64]) -> f64 {
        terms.iter().map(|&(v, c)| c * point[v]).sum()
    }

    /// Objective value at a primal point.
    pub fn objective_at(&self, point: &[f64]) -> f64 {
        self.eval_expr(&self.objective, point) + self.objective_constant
    }

    /// Largest constraint violation at a primal point.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for row in &self.constraints {
            let lhs = self.eval_expr(&row.terms, point);
            let viol = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (j, v) in self.variables.iter().enumerate() {
            let (lo, hi) = match v.kind {
                VarKind::Continuous { lower, upper } => (lower, upper),
                VarKind::Binary => (0.0, 1.0),
            };
            if lo.is_finite() {
                worst = worst.max(lo - point[j]);
            }
            if hi.is_finite() {
                worst = worst.max(point[j] - hi);
            }
        }
        worst
    }

    fn validate(&self) -> Result<(), MilpError> {
        for v in &self.variables {
            if let VarKind::Continuous { lower, upper } = v.kind {
                if lower > upper || lower.is_nan() || upper.is_nan() {
                    return Err(MilpError::BadBounds { name: v.name.clone(), lower, upper });
                }
            }
        }
        for row in &self.constraints {
            for &(v, _) in &row.terms {
                if v >= self.variables.len() {
                    return Err(MilpError::BadVariable(v));
                }
            }
        }
        for &(v, _) in &self.objective {
            if v >= self.variables.len() {
                return Err(MilpError::BadVariable(v));
            }
        }
        Ok(())
    }
}

/// Variables whose optimal value sits within `tol` of an explicit `±big_m`
/// bound. A non-empty report means the chosen big-M may be binding and the
/// model value untrustworthy.
pub fn binding_big_m_report(model: &MilpModel, primal: &[f64], big_m: f64, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    for (j, v) in model.variables.iter().enumerate() {
        if let VarKind::Continuous { lower, upper } = v.kind {
            let x = primal[j];
            if (upper - big_m).abs() <= 1e-9 && x >= upper - tol && upper != 0.0 {
                out.push(format!("{} at upper big-M bound ({x})", v.name));
            }
            if (lower + big_m).abs() <= 1e-9 && x <= lower + tol && lower != 0.0 {
                out.push(format!("{} at lower big-M bound ({x})", v.name));
            }
        }
    }
    out
}

pub(crate) fn lp_limits(opts: &SolverOptions) -> simplex::SimplexLimits {
    simplex::SimplexLimits {
        max_iterations: opts.lp_iter_limit,
        bland_streak: opts.bland_streak,
        feas_tol: opts.lp_feas_tol,
        opt_tol: opts.lp_opt_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SolverOptions;

    #[test]
    fn product_identity_when_z_one() {
        let mut m = MilpModel::new();
        let z = m.add_binary("z");
        let c = m.add_continuous("c", -10.0, 10.0);
        let p = m.add_product_bin_cont("p", z, c, -10.0, 10.0).unwrap();
        m.add_constraint(vec![(z, 1.0)], Relation::Ge, 1.0);
        m.add_constraint(vec![(c, 1.0)], Relation::Eq, 0.7);
        m.set_objective(vec![(p, 1.0)], 0.0);
        let sol = solve_milp(&m, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal[p] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn product_annihilates_when_z_zero() {
        let mut m = MilpModel::new();
        let z = m.add_binary("z");
        let c = m.add_continuous("c", -10.0, 10.0);
        let p = m.add_product_bin_cont("p", z, c, -10.0, 10.0).unwrap();
        m.add_constraint(vec![(z, 1.0)], Relation::Le, 0.0);
        m.add_constraint(vec![(c, 1.0)], Relation::Eq, 4.2);
        // push p upward; the product rows must hold it at zero anyway
        m.set_objective(vec![(p, -1.0)], 0.0);
        let sol = solve_milp(&m, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal[p].abs() < 1e-8);
    }

    #[test]
    fn product_rejects_infinite_bounds() {
        let mut m = MilpModel::new();
        let z = m.add_binary("z");
        let c = m.add_continuous("c", f64::NEG_INFINITY, 1.0);
        assert!(m.add_product_bin_cont("p", z, c, f64::NEG_INFINITY, 1.0).is_err());
    }
}
