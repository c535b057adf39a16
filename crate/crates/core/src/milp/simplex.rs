//! Dense two-phase primal simplex.
//!
//! The solver works on a standardized copy of the model: every variable is
//! shifted/mirrored/split to a nonnegative column, finite upper bounds become
//! explicit rows, each row gets an artificial column, and phase one minimizes
//! the artificial sum. Dantzig pricing with a fallback to Bland's rule after a
//! configurable streak of degenerate pivots guards against cycling. Row duals
//! are recovered from the reduced costs of the artificial columns.

use super::{LpSolution, MilpError, MilpModel, Relation, SolveStatus, VarKind};

const PIVOT_TOL: f64 = 1e-9;
const RC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SimplexLimits {
    pub max_iterations: usize,
    pub bland_streak: usize,
    pub feas_tol: f64,
    pub opt_tol: f64,
}

impl Default for SimplexLimits {
    fn default() -> Self {
        Self { max_iterations: 200_000, bland_streak: 50, feas_tol: 1e-7, opt_tol: 1e-7 }
    }
}

/// How an original variable maps into standardized columns.
#[derive(Debug, Clone, Copy)]
enum ColMap {
    /// x = z + lo
    Shift { col: usize, lo: f64 },
    /// x = hi - z
    Mirror { col: usize, hi: f64 },
    /// x = z_pos - z_neg
    Split { pos: usize, neg: usize },
    /// x fixed to a constant
    Fixed(f64),
}

struct Standardized {
    ncols: usize,
    cost: Vec<f64>,
    obj_shift: f64,
    col_map: Vec<ColMap>,
    /// Dense rows over standardized columns, all as equalities after slack
    /// insertion, rhs normalized nonnegative.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Sign applied to reach rhs >= 0; maps duals back.
    sign: Vec<f64>,
    /// rows.len() entries: Some(model row index) or None for bound rows.
    origin: Vec<Option<usize>>,
}

fn standardize(model: &MilpModel, overrides: Option<&[(f64, f64)]>) -> Result<Standardized, Option<SolveStatus>> {
    let nv = model.variables.len();
    let mut col_map = Vec::with_capacity(nv);
    let mut cost: Vec<f64> = Vec::new();
    let mut obj_shift = 0.0;
    let mut obj_coef = vec![0.0; nv];
    for &(v, c) in &model.objective {
        obj_coef[v] += c;
    }

    let mut upper_rows: Vec<(usize, f64)> = Vec::new(); // (col, cap)
    for (j, var) in model.variables.iter().enumerate() {
        let (mut lo, mut hi) = match var.kind {
            VarKind::Continuous { lower, upper } => (lower, upper),
            VarKind::Binary => (0.0, 1.0),
        };
        if let Some(ov) = overrides {
            lo = lo.max(ov[j].0);
            hi = hi.min(ov[j].1);
        }
        if lo > hi + 1e-12 {
            return Err(Some(SolveStatus::Infeasible));
        }
        let c = obj_coef[j];
        if lo.is_finite() && hi.is_finite() && hi - lo <= 1e-12 {
            col_map.push(ColMap::Fixed(lo));
            obj_shift += c * lo;
        } else if lo.is_finite() {
            let col = cost.len();
            cost.push(c);
            obj_shift += c * lo;
            if hi.is_finite() {
                upper_rows.push((col, hi - lo));
            }
            col_map.push(ColMap::Shift { col, lo });
        } else if hi.is_finite() {
            let col = cost.len();
            cost.push(-c);
            obj_shift += c * hi;
            col_map.push(ColMap::Mirror { col, hi });
        } else {
            let pos = cost.len();
            cost.push(c);
            let neg = cost.len();
            cost.push(-c);
            col_map.push(ColMap::Split { pos, neg });
        }
    }
    let base_cols = cost.len();

    // Assemble dense rows in standardized columns.
    let mut raw_rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
    for row in &model.constraints {
        let mut dense = vec![0.0; base_cols];
        let mut rhs = row.rhs;
        for &(v, a) in &row.terms {
            match col_map[v] {
                ColMap::Fixed(x) => rhs -= a * x,
                ColMap::Shift { col, lo } => {
                    dense[col] += a;
                    rhs -= a * lo;
                }
                ColMap::Mirror { col, hi } => {
                    dense[col] -= a;
                    rhs -= a * hi;
                }
                ColMap::Split { pos, neg } => {
                    dense[pos] += a;
                    dense[neg] -= a;
                }
            }
        }
        raw_rows.push((dense, row.relation, rhs));
    }
    for &(col, cap) in &upper_rows {
        let mut dense = vec![0.0; base_cols];
        dense[col] = 1.0;
        raw_rows.push((dense, Relation::Le, cap));
    }

    // Slack columns, then rhs sign normalization.
    let nrows = raw_rows.len();
    let nslack = raw_rows.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
    let ncols = base_cols + nslack;
    let mut rows = Vec::with_capacity(nrows);
    let mut rhs_v = Vec::with_capacity(nrows);
    let mut sign = Vec::with_capacity(nrows);
    let mut origin = Vec::with_capacity(nrows);
    let mut slack_at = base_cols;
    for (i, (mut dense, rel, rhs)) in raw_rows.into_iter().enumerate() {
        dense.resize(ncols, 0.0);
        match rel {
            Relation::Le => {
                dense[slack_at] = 1.0;
                slack_at += 1;
            }
            Relation::Ge => {
                dense[slack_at] = -1.0;
                slack_at += 1;
            }
            Relation::Eq => {}
        }
        let s = if rhs < 0.0 { -1.0 } else { 1.0 };
        if s < 0.0 {
            for a in dense.iter_mut() {
                *a = -*a;
            }
        }
        rows.push(dense);
        rhs_v.push(rhs.abs());
        sign.push(s);
        origin.push(if i < model.constraints.len() { Some(i) } else { None });
    }
    cost.resize(ncols, 0.0);

    let _ = nslack;
    Ok(Standardized { ncols, cost, obj_shift, col_map, rows, rhs: rhs_v, sign, origin })
}

struct Tableau {
    m: usize,
    /// total columns = ncols + m artificials (rhs stored separately)
    width: usize,
    ncols: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    obj: Vec<f64>, // active objective reduced-cost row
    obj_val: f64,  // negative of the current objective value
    active: Vec<bool>,
    scratch: Vec<f64>,
}

impl Tableau {
    fn pivot(&mut self, prow: usize, pcol: usize) {
        let w = self.width;
        let pstart = prow * w;
        let pval = self.data[pstart + pcol];
        let inv = 1.0 / pval;
        for a in self.data[pstart..pstart + w].iter_mut() {
            *a *= inv;
        }
        self.rhs[prow] *= inv;
        if self.rhs[prow] < 0.0 && self.rhs[prow] > -1e-11 {
            self.rhs[prow] = 0.0;
        }
        self.scratch.copy_from_slice(&self.data[pstart..pstart + w]);
        let rhs_p = self.rhs[prow];
        for i in 0..self.m {
            if i == prow || !self.active[i] {
                continue;
            }
            let f = self.data[i * w + pcol];
            if f != 0.0 {
                let start = i * w;
                let dst = &mut self.data[start..start + w];
                for (d, s) in dst.iter_mut().zip(self.scratch.iter()) {
                    *d -= f * s;
                }
                dst[pcol] = 0.0;
                self.rhs[i] -= f * rhs_p;
                if self.rhs[i] < 0.0 && self.rhs[i] > -1e-11 {
                    self.rhs[i] = 0.0;
                }
            }
        }
        let f = self.obj[pcol];
        if f != 0.0 {
            for (d, s) in self.obj.iter_mut().zip(self.scratch.iter()) {
                *d -= f * s;
            }
            self.obj[pcol] = 0.0;
            self.obj_val -= f * rhs_p;
        }
        self.basis[prow] = pcol;
    }
}

enum PhaseOutcome {
    Done,
    Unbounded,
    IterationLimit,
    Breakdown,
}

fn run_phase(t: &mut Tableau, limits: &SimplexLimits, iters: &mut usize) -> PhaseOutcome {
    let allow_cols = t.ncols;
    let mut degenerate_streak = 0usize;
    let mut bland = false;
    loop {
        if *iters >= limits.max_iterations {
            return PhaseOutcome::IterationLimit;
        }
        *iters += 1;

        // entering column
        let mut pcol = None;
        if bland {
            for j in 0..allow_cols {
                if t.obj[j] < -RC_TOL {
                    pcol = Some(j);
                    break;
                }
            }
        } else {
            let mut best = -RC_TOL;
            for j in 0..allow_cols {
                if t.obj[j] < best {
                    best = t.obj[j];
                    pcol = Some(j);
                }
            }
        }
        let Some(pcol) = pcol else { return PhaseOutcome::Done };

        // ratio test
        let mut prow: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..t.m {
            if !t.active[i] {
                continue;
            }
            let a = t.data[i * t.width + pcol];
            if a > PIVOT_TOL {
                let ratio = t.rhs[i] / a;
                let better = match prow {
                    None => true,
                    Some(r) => {
                        ratio < best_ratio - 1e-12
                            || ((ratio - best_ratio).abs() <= 1e-12 && t.basis[i] < t.basis[r])
                    }
                };
                if better {
                    best_ratio = ratio;
                    prow = Some(i);
                }
            }
        }
        let Some(prow) = prow else { return PhaseOutcome::Unbounded };

        let before = t.obj_val;
        t.pivot(prow, pcol);
        if !t.obj_val.is_finite() {
            return PhaseOutcome::Breakdown;
        }
        if (before - t.obj_val).abs() <= 1e-12 {
            degenerate_streak += 1;
            if degenerate_streak >= limits.bland_streak {
                bland = true;
            }
        } else {
            degenerate_streak = 0;
            bland = false;
        }
    }
}

/// Solves a pure LP (no binaries) with the two-phase primal simplex.
pub fn solve_lp(model: &MilpModel, opts: &crate::model::SolverOptions) -> Result<LpSolution, MilpError> {
    if model.has_binaries() {
        return Err(MilpError::BinariesInLp);
    }
    model.validate()?;
    Ok(solve_lp_with_overrides(model, None, &super::lp_limits(opts)))
}

/// Internal entry point: bound overrides support branch-and-bound fixings.
pub(crate) fn solve_lp_with_overrides(
    model: &MilpModel,
    overrides: Option<&[(f64, f64)]>,
    limits: &SimplexLimits,
) -> LpSolution {
    let fail = |status: SolveStatus| LpSolution {
        status,
        value: f64::INFINITY,
        primal: Vec::new(),
        duals: Vec::new(),
        dual_value: f64::NAN,
    };

    let std = match standardize(model, overrides) {
        Ok(s) => s,
        Err(Some(status)) => return fail(status),
        Err(None) => return fail(SolveStatus::NumericalBreakdown),
    };
    let m = std.rows.len();
    let ncols = std.ncols;
    let width = ncols + m;

    let mut t = Tableau {
        m,
        width,
        ncols,
        data: vec![0.0; m * width],
        rhs: std.rhs.clone(),
        basis: (0..m).map(|i| ncols + i).collect(),
        obj: vec![0.0; width],
        obj_val: 0.0,
        active: vec![true; m],
        scratch: vec![0.0; width],
    };
    for (i, row) in std.rows.iter().enumerate() {
        t.data[i * width..i * width + ncols].copy_from_slice(row);
        t.data[i * width + ncols + i] = 1.0;
    }

    // Phase 1: reduced costs of min(sum of artificials) under artificial basis.
    for j in 0..ncols {
        let mut s = 0.0;
        for i in 0..m {
            s += t.data[i * width + j];
        }
        t.obj[j] = -s;
    }
    t.obj_val = -t.rhs.iter().sum::<f64>();

    let mut iters = 0usize;
    match run_phase(&mut t, limits, &mut iters) {
        PhaseOutcome::Done => {}
        PhaseOutcome::Unbounded | PhaseOutcome::Breakdown => return fail(SolveStatus::NumericalBreakdown),
        PhaseOutcome::IterationLimit => return fail(SolveStatus::LimitReached),
    }
    let scale = 1.0 + std.rhs.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if -t.obj_val > limits.feas_tol * scale {
        return fail(SolveStatus::Infeasible);
    }

    // Drive leftover artificials out of the basis or deactivate their rows.
    for i in 0..m {
        if t.basis[i] >= ncols && t.active[i] {
            let mut found = None;
            for j in 0..ncols {
                if t.data[i * width + j].abs() > 1e-7 {
                    found = Some(j);
                    break;
                }
            }
            match found {
                Some(j) => t.pivot(i, j),
                None => t.active[i] = false, // redundant row
            }
        }
    }

    // Phase 2 objective row.
    let mut obj = vec![0.0; width];
    obj[..ncols].copy_from_slice(&std.cost[..ncols]);
    let mut obj_val = 0.0;
    for i in 0..m {
        if !t.active[i] {
            continue;
        }
        let b = t.basis[i];
        let cb = if b < ncols { std.cost[b] } else { 0.0 };
        if cb != 0.0 {
            let start = i * width;
            for j in 0..width {
                obj[j] -= cb * t.data[start + j];
            }
            obj_val -= cb * t.rhs[i];
        }
    }
    for i in 0..m {
        if t.active[i] {
            obj[t.basis[i]] = 0.0;
        }
    }
    t.obj = obj;
    t.obj_val = obj_val;

    match run_phase(&mut t, limits, &mut iters) {
        PhaseOutcome::Done => {}
        PhaseOutcome::Unbounded => {
            let mut out = fail(SolveStatus::Unbounded);
            out.value = f64::NEG_INFINITY;
            return out;
        }
        PhaseOutcome::Breakdown => return fail(SolveStatus::NumericalBreakdown),
        PhaseOutcome::IterationLimit => return fail(SolveStatus::LimitReached),
    }

    // Recover the standardized primal, then the model primal.
    let mut z = vec![0.0; ncols];
    for i in 0..m {
        if t.active[i] && t.basis[i] < ncols {
            z[t.basis[i]] = t.rhs[i];
        }
    }
    let mut primal = vec![0.0; model.variables.len()];
    for (j, cmap) in std.col_map.iter().enumerate() {
        primal[j] = match *cmap {
            ColMap::Fixed(x) => x,
            ColMap::Shift { col, lo } => z[col] + lo,
            ColMap::Mirror { col, hi } => hi - z[col],
            ColMap::Split { pos, neg } => z[pos] - z[neg],
        };
    }
    // obj_val tracks the negative of the phase-2 objective.
    let value = -t.obj_val + std.obj_shift;

    // Duals: artificial column j's reduced cost equals -y_j in the normalized
    // system (phase-2 artificial cost is zero).
    let mut duals = vec![0.0; model.constraints.len()];
    let mut dual_value = std.obj_shift;
    for i in 0..m {
        let y_norm = if t.active[i] { -t.obj[ncols + i] } else { 0.0 };
        let y = std.sign[i] * y_norm;
        dual_value += y * std.sign[i] * std.rhs[i];
        if let Some(orig) = std.origin[i] {
            duals[orig] = y;
        }
    }

    // Never report a wrong Optimal: re-verify feasibility on the original
    // model and strong duality on the standardized one.
    let viol = model.max_violation_with_overrides(&primal, overrides);
    let dual_gap = (value - dual_value).abs();
    if viol > 100.0 * limits.feas_tol * scale || !value.is_finite() {
        return fail(SolveStatus::NumericalBreakdown);
    }
    if dual_gap > 100.0 * limits.opt_tol * (1.0 + value.abs()) {
        return fail(SolveStatus::NumericalBreakdown);
    }

    LpSolution { status: SolveStatus::Optimal, value, primal, duals, dual_value }
}

impl MilpModel {
    fn max_violation_with_overrides(&self, point: &[f64], overrides: Option<&[(f64, f64)]>) -> f64 {
        let mut worst = self.max_violation(point);
        if let Some(ov) = overrides {
            for (j, &(lo, hi)) in ov.iter().enumerate() {
                if lo.is_finite() {
                    worst = worst.max(lo - point[j]);
                }
                if hi.is_finite() {
                    worst = worst.max(point[j] - hi);
                }
            }
        }
        worst
    }
}
