//! Canonical problem data: uncertainty sets, binary feasible sets, the
//! two-stage instance, and shared solver options.
//!
//! Everything downstream assumes a validated instance in minimization sense;
//! [`DdidInstance::canonicalize`] produces that form and solvers un-negate
//! reported values for maximization inputs.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::milp::{solve_milp, LinExpr, MilpModel, SolveStatus};
pub use crate::milp::Relation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Polyhedron `{ xi : A xi <= b }`, non-empty and bounded for valid instances.
/// `observable_mask[i]` marks coordinate `i` as eligible for observation;
/// lifted auxiliary coordinates are marked unobservable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    pub dim: usize,
    pub a: Matrix,
    pub b: Vec<f64>,
    pub observable_mask: Vec<bool>,
}

impl UncertaintySet {
    /// Axis-aligned box `[lo_i, hi_i]` per coordinate, with an optional mask.
    pub fn box_set(bounds: &[(f64, f64)], observable_mask: Vec<bool>) -> Self {
        let dim = bounds.len();
        let mut a = Matrix::zeros(2 * dim, dim);
        let mut b = vec![0.0; 2 * dim];
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi;
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo;
        }
        Self { dim, a, b, observable_mask }
    }

    pub fn num_rows(&self) -> usize {
        self.a.rows
    }

    pub fn contains(&self, xi: &[f64], tol: f64) -> bool {
        let ax = self.a.mul_vec(xi);
        ax.iter().zip(&self.b).all(|(lhs, rhs)| *lhs <= rhs + tol)
    }

    /// Per-coordinate min/max solved by 2*dim bound LPs. `Err` carries a
    /// human-readable reason (empty or unbounded set).
    pub fn coordinate_bounds(&self, opts: &SolverOptions) -> Result<Vec<(f64, f64)>, String> {
        let mut out = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let mut lohi = [0.0; 2];
            for (slot, dir) in [(0usize, 1.0f64), (1, -1.0)] {
                let mut m = MilpModel::new();
                for j in 0..self.dim {
                    m.add_continuous(format!("xi{j}"), f64::NEG_INFINITY, f64::INFINITY);
                }
                for r in 0..self.a.rows {
                    let terms: Vec<_> =
                        self.a.row(r).iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, c)| (j, *c)).collect();
                    m.add_constraint(terms, Relation::Le, self.b[r]);
                }
                m.set_objective(vec![(i, dir)], 0.0);
                let sol = crate::milp::solve_lp(&m, opts).map_err(|e| e.to_string())?;
                match sol.status {
                    SolveStatus::Optimal => lohi[slot] = sol.value * dir,
                    SolveStatus::Infeasible => return Err("empty uncertainty set".into()),
                    SolveStatus::Unbounded => {
                        return Err(format!("unbounded uncertainty set (coordinate {i})"));
                    }
                    other => return Err(format!("bound LP failed with status {other:?}")),
                }
            }
            out.push((lohi[0], lohi[1]));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Subset of {0,1}^dim cut out by linear constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryFeasibleSet {
    pub dim: usize,
    pub constraints: Vec<SetConstraint>,
}

impl BinaryFeasibleSet {
    /// The full hypercube {0,1}^dim.
    pub fn free(dim: usize) -> Self {
        Self { dim, constraints: Vec::new() }
    }

    /// `{ v : sum v_i = 1 }` - unit vectors only.
    pub fn simplex(dim: usize) -> Self {
        Self {
            dim,
            constraints: vec![SetConstraint { coeffs: vec![1.0; dim], relation: Relation::Eq, rhs: 1.0 }],
        }
    }

    /// `{ v : sum v_i = q }`.
    pub fn cardinality(dim: usize, q: usize) -> Self {
        Self {
            dim,
            constraints: vec![SetConstraint { coeffs: vec![1.0; dim], relation: Relation::Eq, rhs: q as f64 }],
        }
    }

    /// The singleton containing exactly `v`.
    pub fn fixed(v: &[u8]) -> Self {
        let mut s = Self::free(v.len());
        for (i, &b) in v.iter().enumerate() {
            let mut coeffs = vec![0.0; v.len()];
            coeffs[i] = 1.0;
            s.constraints.push(SetConstraint { coeffs, relation: Relation::Eq, rhs: b as f64 });
        }
        s
    }

    /// Forces `v_i = 0` for every masked (false) coordinate.
    pub fn mask_zero(mut self, mask: &[bool]) -> Self {
        assert_eq!(mask.len(), self.dim);
        for (i, &obs) in mask.iter().enumerate() {
            if !obs {
                let mut coeffs = vec![0.0; self.dim];
                coeffs[i] = 1.0;
                self.constraints.push(SetConstraint { coeffs, relation: Relation::Le, rhs: 0.0 });
            }
        }
        self
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.dim);
        self.constraints.push(SetConstraint { coeffs, relation, rhs });
    }

    /// Membership by direct constraint evaluation.
    pub fn contains(&self, v: &[u8]) -> bool {
        if v.len() != self.dim || v.iter().any(|&b| b > 1) {
            return false;
        }
        self.constraints.iter().all(|c| {
            let lhs: f64 = c.coeffs.iter().zip(v).filter(|(_, &b)| b == 1).map(|(a, _)| *a).sum();
            match c.relation {
                Relation::Le => lhs <= c.rhs + 1e-9,
                Relation::Ge => lhs >= c.rhs - 1e-9,
                Relation::Eq => (lhs - c.rhs).abs() <= 1e-9,
            }
        })
    }

    /// Adds the set's constraints over existing binary model variables. Entries
    /// of `vars` that are `None` stand for coordinates fixed at zero.
    pub fn apply_to_model(&self, model: &mut MilpModel, vars: &[Option<crate::milp::VarId>]) {
        assert_eq!(vars.len(), self.dim);
        for c in &self.constraints {
            let mut expr = LinExpr::new();
            for (i, &coef) in c.coeffs.iter().enumerate() {
                if coef != 0.0 {
                    if let Some(v) = vars[i] {
                        expr.add_term(v, coef);
                    }
                }
            }
            model.add_constraint_expr(expr, c.relation, c.rhs);
        }
    }
}

/// Right-hand side of the second-stage constraints: a constant vector keeps
/// uncertainty out of the constraints (objective-uncertainty pipeline), an
/// `H` matrix puts it in (constraint-uncertainty pipeline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsMode {
    Constant(Vec<f64>),
    Uncertain(Matrix),
}

impl RhsMode {
    pub fn is_constant(&self) -> bool {
        matches!(self, RhsMode::Constant(_))
    }

    pub fn num_rows(&self) -> usize {
        match self {
            RhsMode::Constant(h) => h.len(),
            RhsMode::Uncertain(h) => h.rows,
        }
    }
}

/// Generic two-stage robust problem with decision-dependent information
/// discovery: objective `xi' cost_x x + xi' cost_w w + xi' cost_y y`, second
/// stage constraints `cons_x x + cons_w w + cons_y y <= rhs`, measurement
/// decisions `w` choosing which coordinates of `xi` are revealed before `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdidInstance {
    pub sense: Sense,
    /// C: n_xi x n_x
    pub cost_x: Matrix,
    /// D: n_xi x n_xi
    pub cost_w: Matrix,
    /// Q: n_xi x n_y
    pub cost_y: Matrix,
    /// T: rows x n_x
    pub cons_x: Matrix,
    /// V: rows x n_xi
    pub cons_w: Matrix,
    /// W: rows x n_y
    pub cons_y: Matrix,
    pub rhs: RhsMode,
    pub xi: UncertaintySet,
    pub set_x: BinaryFeasibleSet,
    pub set_w: BinaryFeasibleSet,
    pub set_y: BinaryFeasibleSet,
}

impl DdidInstance {
    pub fn n_x(&self) -> usize {
        self.cost_x.cols
    }

    pub fn n_xi(&self) -> usize {
        self.xi.dim
    }

    pub fn n_y(&self) -> usize {
        self.cost_y.cols
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.num_rows()
    }

    /// Rewrites a maximization instance as a minimization one by negating the
    /// objective matrices; idempotent on minimize instances. Reported solve
    /// values are un-negated by the solvers.
    pub fn canonicalize(&self) -> DdidInstance {
        match self.sense {
            Sense::Minimize => self.clone(),
            Sense::Maximize => DdidInstance {
                sense: Sense::Minimize,
                cost_x: self.cost_x.scale(-1.0),
                cost_w: self.cost_w.scale(-1.0),
                cost_y: self.cost_y.scale(-1.0),
                ..self.clone()
            },
        }
    }

    /// Sign to apply to internal (minimize-sense) values before reporting.
    pub fn report_sign(&self) -> f64 {
        match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        }
    }

    /// Deterministic-stage LHS `cons_x x + cons_w w + cons_y y` for fixed
    /// binary decisions.
    pub fn stage_lhs(&self, x: &[u8], w: &[u8], y: &[u8]) -> Vec<f64> {
        let mut lhs = self.cons_x.mul_binary(x);
        for (l, v) in lhs.iter_mut().zip(self.cons_w.mul_binary(w)) {
            *l += v;
        }
        for (l, v) in lhs.iter_mut().zip(self.cons_y.mul_binary(y)) {
            *l += v;
        }
        lhs
    }

    /// Objective coefficient vector `cost_x x + cost_w w + cost_y y` (a linear
    /// function of `xi`).
    pub fn objective_coeffs(&self, x: &[u8], w: &[u8], y: &[u8]) -> Vec<f64> {
        let mut c = self.cost_x.mul_binary(x);
        for (l, v) in c.iter_mut().zip(self.cost_w.mul_binary(w)) {
            *l += v;
        }
        for (l, v) in c.iter_mut().zip(self.cost_y.mul_binary(y)) {
            *l += v;
        }
        c
    }

    /// Default big-M: scales with the largest data entry and the widest
    /// coordinate range of the uncertainty set.
    pub fn derived_big_m(&self, bounds: &[(f64, f64)]) -> f64 {
        let mut data_max = self.cost_x.max_abs();
        data_max = data_max.max(self.cost_w.max_abs());
        data_max = data_max.max(self.cost_y.max_abs());
        data_max = data_max.max(self.cons_x.max_abs());
        data_max = data_max.max(self.cons_w.max_abs());
        data_max = data_max.max(self.cons_y.max_abs());
        data_max = data_max.max(self.xi.b.iter().fold(0.0_f64, |a, &x| a.max(x.abs())));
        match &self.rhs {
            RhsMode::Constant(h) => {
                data_max = data_max.max(h.iter().fold(0.0_f64, |a, &x| a.max(x.abs())));
            }
            RhsMode::Uncertain(h) => data_max = data_max.max(h.max_abs()),
        }
        let range = bounds.iter().fold(0.0_f64, |a, &(lo, hi)| a.max(hi - lo));
        10.0 * data_max.max(1.0) * (1.0 + range)
    }

    /// Default inner-approximation epsilon for the constraint pipeline.
    pub fn derived_eps(&self) -> f64 {
        match &self.rhs {
            RhsMode::Constant(_) => 1e-4,
            RhsMode::Uncertain(h) => {
                let max_row_norm = (0..h.rows)
                    .map(|r| h.row(r).iter().map(|x| x.abs()).sum::<f64>())
                    .fold(0.0_f64, f64::max);
                1e-4 * (1.0 + max_row_norm)
            }
        }
    }
}

/// One failed validation check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub check: String,
    pub detail: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.check, self.detail)
    }
}

/// Checks every instance invariant; an empty report means the instance is
/// well-formed. Failures are report entries, never panics.
pub fn validate_instance(inst: &DdidInstance, opts: &SolverOptions) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |check: &str, detail: String| issues.push(ValidationIssue { check: check.into(), detail });

    let n_xi = inst.xi.dim;
    let l = inst.n_rows();
    let dim_checks = [
        ("cost_x", inst.cost_x.rows == n_xi, format!("{}x{} vs n_xi={}", inst.cost_x.rows, inst.cost_x.cols, n_xi)),
        ("cost_w", inst.cost_w.rows == n_xi && inst.cost_w.cols == n_xi, format!("{}x{}", inst.cost_w.rows, inst.cost_w.cols)),
        ("cost_y", inst.cost_y.rows == n_xi, format!("{}x{}", inst.cost_y.rows, inst.cost_y.cols)),
        ("cons_x", inst.cons_x.rows == l && inst.cons_x.cols == inst.cost_x.cols, format!("{}x{}", inst.cons_x.rows, inst.cons_x.cols)),
        ("cons_w", inst.cons_w.rows == l && inst.cons_w.cols == n_xi, format!("{}x{}", inst.cons_w.rows, inst.cons_w.cols)),
        ("cons_y", inst.cons_y.rows == l && inst.cons_y.cols == inst.cost_y.cols, format!("{}x{}", inst.cons_y.rows, inst.cons_y.cols)),
        ("xi.a", inst.xi.a.cols == n_xi && inst.xi.a.rows == inst.xi.b.len(), format!("{}x{} vs b len {}", inst.xi.a.rows, inst.xi.a.cols, inst.xi.b.len())),
        ("observable_mask", inst.xi.observable_mask.len() == n_xi, format!("len {}", inst.xi.observable_mask.len())),
        ("set_x.dim", inst.set_x.dim == inst.n_x(), format!("{} vs {}", inst.set_x.dim, inst.n_x())),
        ("set_w.dim", inst.set_w.dim == n_xi, format!("{} vs {}", inst.set_w.dim, n_xi)),
        ("set_y.dim", inst.set_y.dim == inst.n_y(), format!("{} vs {}", inst.set_y.dim, inst.n_y())),
    ];
    let mut dims_ok = true;
    for (name, ok, detail) in dim_checks {
        if !ok {
            dims_ok = false;
            push("dimension mismatch", format!("{name}: {detail}"));
        }
    }
    if let RhsMode::Uncertain(h) = &inst.rhs {
        if h.cols != n_xi {
            dims_ok = false;
            push("dimension mismatch", format!("rhs H: {}x{} vs n_xi={}", h.rows, h.cols, n_xi));
        }
    }
    if !dims_ok {
        return issues;
    }

    match inst.xi.coordinate_bounds(opts) {
        Ok(_) => {}
        Err(msg) => push("uncertainty set", msg),
    }

    // Masked coordinates must not be observable through set_w.
    for i in 0..n_xi {
        if !inst.xi.observable_mask[i] {
            let mut m = MilpModel::new();
            let vars: Vec<Option<crate::milp::VarId>> =
                (0..n_xi).map(|j| Some(m.add_binary(format!("w{j}")))).collect();
            inst.set_w.apply_to_model(&mut m, &vars);
            m.set_objective(vec![(vars[i].unwrap(), -1.0)], 0.0);
            match solve_milp(&m, opts) {
                Ok(sol) if sol.status == SolveStatus::Optimal && -sol.value >= 0.5 => {
                    push("mask violation", format!("set_w permits w_{i} = 1 on an unobservable coordinate"));
                }
                Ok(sol) if sol.status == SolveStatus::Infeasible => {
                    push("empty measurement set", "set_w has no members".into());
                    break;
                }
                Ok(_) => {}
                Err(e) => push("mask check failed", e.to_string()),
            }
        }
    }

    issues
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryMode {
    /// Enabled automatically for K >= 3.
    Auto,
    On,
    Off,
}

impl SymmetryMode {
    pub fn enabled(self, k: usize) -> bool {
        match self {
            SymmetryMode::Auto => k >= 3,
            SymmetryMode::On => true,
            SymmetryMode::Off => false,
        }
    }
}

/// Shared solver configuration. Tolerances must be strictly positive and
/// `ccg_delta >= 10 * lp_opt_tol`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Big-M for dual/product bounds; `None` derives it from instance data.
    pub big_m: Option<f64>,
    /// Epsilon of the inner approximation in the constraint pipeline; `None`
    /// derives `1e-4 * (1 + max |H| row norm)`.
    pub eps_feasibility: Option<f64>,
    /// Optimality tolerance of the column-and-constraint generation loop.
    pub ccg_delta: f64,
    pub integrality_tol: f64,
    pub lp_feas_tol: f64,
    pub lp_opt_tol: f64,
    pub node_limit: usize,
    /// Wall-clock limit in seconds for a branch-and-bound solve; 0 disables.
    pub time_limit: u64,
    pub seed: u64,
    /// Degenerate-pivot streak after which the simplex switches to Bland's rule.
    pub bland_streak: usize,
    pub lp_iter_limit: usize,
    /// Cap on 2^dim for binary-set enumeration.
    pub enum_cap: usize,
    /// Cap on (L+1)^K in the constraint pipeline.
    pub index_cap: usize,
    /// Cap on |I|^K in the monolithic piecewise-linear model.
    pub piece_cap: usize,
    /// Cap on K^T in the multistage model.
    pub tuple_cap: usize,
    /// Above this many model variables the K-adaptability solvers switch from
    /// the assembled MBLP to exact enumeration over first-stage decisions with
    /// per-block LP evaluation.
    pub milp_var_cap: usize,
    pub symmetry_breaking: SymmetryMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            big_m: None,
            eps_feasibility: None,
            ccg_delta: 1e-3,
            integrality_tol: 1e-6,
            lp_feas_tol: 1e-7,
            lp_opt_tol: 1e-7,
            node_limit: 1_000_000,
            time_limit: 0,
            seed: 0,
            bland_streak: 50,
            lp_iter_limit: 200_000,
            enum_cap: 1 << 16,
            index_cap: 10_000,
            piece_cap: 4_096,
            tuple_cap: 4_096,
            milp_var_cap: 2_500,
            symmetry_breaking: SymmetryMode::Auto,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        let pos = [
            ("ccg_delta", self.ccg_delta),
            ("integrality_tol", self.integrality_tol),
            ("lp_feas_tol", self.lp_feas_tol),
            ("lp_opt_tol", self.lp_opt_tol),
        ];
        for (name, v) in pos {
            if !(v > 0.0) {
                return Err(format!("{name} must be strictly positive"));
            }
        }
        if let Some(m) = self.big_m {
            if !(m > 0.0) {
                return Err("big_m must be strictly positive".into());
            }
        }
        if let Some(e) = self.eps_feasibility {
            if !(e > 0.0) {
                return Err("eps_feasibility must be strictly positive".into());
            }
        }
        if self.ccg_delta < 10.0 * self.lp_opt_tol {
            return Err("ccg_delta must be at least 10 * lp_opt_tol".into());
        }
        Ok(())
    }

    pub fn resolve_eps(&self, inst: &DdidInstance) -> f64 {
        self.eps_feasibility.unwrap_or_else(|| inst.derived_eps())
    }
}
