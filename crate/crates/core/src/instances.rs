//! Problem-family builders: synthetic and CSV-loaded preference elicitation,
//! and the two-stage R&D project portfolio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kadapt::pwl::{wcar_to_pwl, PwlObjective};
use crate::matrix::Matrix;
use crate::model::{BinaryFeasibleSet, DdidInstance, Relation, RhsMode, Sense, UncertaintySet};

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv field {0:?} is not a number")]
    BadField(String),
    #[error(transparent)]
    KAdapt(#[from] crate::kadapt::KAdaptError),
}

/// Preference-elicitation problem data: item feature matrix, budget of
/// uncertainty on answer noise, and the question budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeInstance {
    /// I x J feature matrix.
    pub items: Matrix,
    /// 1-norm budget on answer noise.
    pub gamma: f64,
    /// Number of questions that must be asked.
    pub questions: usize,
    /// Normalizer: the largest item 1-norm.
    pub rho: f64,
}

impl PeInstance {
    pub fn new(items: Matrix, gamma: f64, questions: usize) -> Result<Self, InstanceError> {
        if items.rows == 0 || items.cols == 0 {
            return Err(InstanceError::BadParameter("need at least one item and one feature".into()));
        }
        if questions > items.rows {
            return Err(InstanceError::BadParameter("cannot ask more questions than there are items".into()));
        }
        if gamma < 0.0 {
            return Err(InstanceError::BadParameter("gamma must be nonnegative".into()));
        }
        let rho = (0..items.rows)
            .map(|i| items.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max);
        if rho == 0.0 {
            return Err(InstanceError::BadParameter("all items have zero features".into()));
        }
        Ok(Self { items, gamma, questions, rho })
    }

    pub fn num_items(&self) -> usize {
        self.items.rows
    }

    pub fn num_features(&self) -> usize {
        self.items.cols
    }
}

/// Synthetic items with features drawn i.i.d. uniform on [-1, 1]; fully
/// deterministic per seed.
pub fn gen_synthetic_pe(
    items: usize,
    features: usize,
    gamma: f64,
    questions: usize,
    seed: u64,
) -> Result<PeInstance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(items, features);
    for i in 0..items {
        for j in 0..features {
            m[(i, j)] = rng.gen_range(-1.0..=1.0);
        }
    }
    PeInstance::new(m, gamma, questions)
}

/// Lifted uncertainty set over [normalized utilities | user vector | noise
/// split]: `xi_i = (phi_i' u + rho) / (2 rho) + e_i^+ - e_i^-`, `u` in the
/// unit box, noise 1-norm at most gamma, utilities kept in [0, 1] by explicit
/// rows. With gamma = 0 the noise coordinates are dropped entirely.
fn pe_uncertainty(pe: &PeInstance) -> UncertaintySet {
    let i_n = pe.num_items();
    let j_n = pe.num_features();
    let with_noise = pe.gamma > 0.0;
    let dim = i_n + j_n + if with_noise { 2 * i_n } else { 0 };
    let eplus = |i: usize| i_n + j_n + i;
    let eminus = |i: usize| i_n + j_n + i_n + i;

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..i_n {
        // xi_i - phi_i' u / (2 rho) - e_i^+ + e_i^- = 1/2, as paired rows
        let mut coeffs = vec![0.0; dim];
        coeffs[i] = 1.0;
        for j in 0..j_n {
            coeffs[i_n + j] = -pe.items[(i, j)] / (2.0 * pe.rho);
        }
        if with_noise {
            coeffs[eplus(i)] = -1.0;
            coeffs[eminus(i)] = 1.0;
        }
        rows.push((coeffs.clone(), 0.5));
        rows.push((coeffs.iter().map(|c| -c).collect(), -0.5));
    }
    for j in 0..j_n {
        let mut up = vec![0.0; dim];
        up[i_n + j] = 1.0;
        rows.push((up.clone(), 1.0));
        rows.push((up.iter().map(|c| -c).collect(), 1.0));
    }
    for i in 0..i_n {
        let mut up = vec![0.0; dim];
        up[i] = 1.0;
        rows.push((up.clone(), 1.0));
        rows.push((up.iter().map(|c| -c).collect(), 0.0));
    }
    if with_noise {
        for i in 0..i_n {
            for idx in [eplus(i), eminus(i)] {
                let mut lo = vec![0.0; dim];
                lo[idx] = -1.0;
                rows.push((lo, 0.0));
            }
        }
        let mut budget = vec![0.0; dim];
        for i in 0..i_n {
            budget[eplus(i)] = 1.0;
            budget[eminus(i)] = 1.0;
        }
        rows.push((budget, pe.gamma));
    }

    let a = Matrix::from_rows(rows.iter().map(|(c, _)| c.clone()).collect());
    let b = rows.into_iter().map(|(_, rhs)| rhs).collect();
    let mut mask = vec![false; dim];
    for m in mask.iter_mut().take(i_n) {
        *m = true;
    }
    UncertaintySet { dim, a, b, observable_mask: mask }
}

/// Worst-case utility elicitation: maximize the utility of the recommended
/// item, asking exactly `questions` of the item-utility coordinates.
pub fn build_pe_utility(pe: &PeInstance) -> DdidInstance {
    let xi = pe_uncertainty(pe);
    let dim = xi.dim;
    let i_n = pe.num_items();
    let mut cost_y = Matrix::zeros(dim, i_n);
    for i in 0..i_n {
        cost_y[(i, i)] = 1.0;
    }
    let mut set_w = BinaryFeasibleSet::free(dim).mask_zero(&xi.observable_mask);
    let mut coeffs = vec![0.0; dim];
    for c in coeffs.iter_mut().take(i_n) {
        *c = 1.0;
    }
    set_w.push(coeffs, Relation::Eq, pe.questions as f64);

    DdidInstance {
        sense: Sense::Maximize,
        cost_x: Matrix::zeros(dim, 0),
        cost_w: Matrix::zeros(dim, dim),
        cost_y,
        cons_x: Matrix::zeros(0, 0),
        cons_w: Matrix::zeros(0, dim),
        cons_y: Matrix::zeros(0, i_n),
        rhs: RhsMode::Constant(vec![]),
        xi,
        set_x: BinaryFeasibleSet::free(0),
        set_w,
        set_y: BinaryFeasibleSet::simplex(i_n),
    }
}

/// Worst-case absolute regret elicitation: the same uncertainty set and
/// feasible sets, with the objective replaced by the regret pieces
/// `xi_i - xi' y`. Returns the minimize-sense host and the piece family.
pub fn build_pe_regret(pe: &PeInstance) -> Result<(DdidInstance, PwlObjective), InstanceError> {
    let utility = build_pe_utility(pe);
    let pwl = wcar_to_pwl(&utility)?;
    let dim = utility.n_xi();
    let host = DdidInstance {
        sense: Sense::Minimize,
        cost_x: Matrix::zeros(dim, 0),
        cost_w: Matrix::zeros(dim, dim),
        cost_y: Matrix::zeros(dim, pe.num_items()),
        ..utility
    };
    Ok((host, pwl))
}

/// R&D portfolio problem data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RndPortfolio {
    pub theta: f64,
    pub budget: f64,
    pub nominal_returns: Vec<f64>,
    pub nominal_costs: Vec<f64>,
    /// N x M factor loadings for returns.
    pub return_loadings: Matrix,
    /// N x M factor loadings for costs.
    pub cost_loadings: Matrix,
}

/// Synthetic R&D portfolio: nominal returns in [1, 2], nominal costs in
/// [0.5, 1.5], loadings uniform in [-1, 1], budget a fixed fraction of the
/// total nominal cost.
pub fn gen_synthetic_rnd(projects: usize, factors: usize, theta: f64, seed: u64) -> Result<RndPortfolio, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nominal_returns: Vec<f64> = (0..projects).map(|_| rng.gen_range(1.0..=2.0)).collect();
    let nominal_costs: Vec<f64> = (0..projects).map(|_| rng.gen_range(0.5..=1.5)).collect();
    let mut return_loadings = Matrix::zeros(projects, factors);
    let mut cost_loadings = Matrix::zeros(projects, factors);
    for i in 0..projects {
        for j in 0..factors {
            return_loadings[(i, j)] = rng.gen_range(-1.0..=1.0);
        }
    }
    for i in 0..projects {
        for j in 0..factors {
            cost_loadings[(i, j)] = rng.gen_range(-1.0..=1.0);
        }
    }
    let budget = 0.6 * nominal_costs.iter().sum::<f64>();
    Ok(RndPortfolio { theta, budget, nominal_returns, nominal_costs, return_loadings, cost_loadings })
}

/// Two-stage R&D portfolio instance (maximize, constraint uncertainty).
///
/// Coordinates are [returns | costs | risk factors | unit]: returns and costs
/// are affine in the shared risk factors, the unit coordinate carries
/// constants into the uncertain rows. First-year investments `w^r` observe
/// their project's return and cost (the measurement vector duplicates `w^r`
/// over both blocks). The budget `(w^r + y)' xi^c <= B` is encoded exactly by
/// one big-M row per non-empty project subset, which keeps the technology
/// matrices deterministic.
pub fn build_rnd_portfolio(rnd: &RndPortfolio) -> Result<DdidInstance, InstanceError> {
    let n = rnd.nominal_returns.len();
    let m_f = rnd.return_loadings.cols;
    if n == 0 || n > 10 {
        return Err(InstanceError::BadParameter("projects must be between 1 and 10".into()));
    }
    if !(rnd.theta > 0.0 && rnd.theta <= 1.0) {
        return Err(InstanceError::BadParameter("theta must lie in (0, 1]".into()));
    }
    if rnd.budget <= 0.0 {
        return Err(InstanceError::BadParameter("budget must be positive".into()));
    }
    if rnd.nominal_costs.len() != n || rnd.cost_loadings.rows != n || rnd.return_loadings.rows != n || rnd.cost_loadings.cols != m_f {
        return Err(InstanceError::BadParameter("loading/nominal dimensions disagree".into()));
    }
    if rnd.nominal_costs.iter().any(|&c| c <= 0.0) {
        return Err(InstanceError::BadParameter("nominal costs must be positive".into()));
    }

    let dim = 2 * n + m_f + 1;
    let ret = |i: usize| i;
    let cost = |i: usize| n + i;
    let factor = |j: usize| 2 * n + j;
    let one = 2 * n + m_f;

    // Uncertainty set rows.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let eq = |coeffs: Vec<f64>, rhs: f64, rows: &mut Vec<(Vec<f64>, f64)>| {
        rows.push((coeffs.clone(), rhs));
        rows.push((coeffs.iter().map(|c| -c).collect(), -rhs));
    };
    for i in 0..n {
        let mut c = vec![0.0; dim];
        c[ret(i)] = 1.0;
        for j in 0..m_f {
            c[factor(j)] = -rnd.nominal_returns[i] * rnd.return_loadings[(i, j)] / 2.0;
        }
        eq(c, rnd.nominal_returns[i], &mut rows);
        let mut c = vec![0.0; dim];
        c[cost(i)] = 1.0;
        for j in 0..m_f {
            c[factor(j)] = -rnd.nominal_costs[i] * rnd.cost_loadings[(i, j)] / 2.0;
        }
        eq(c, rnd.nominal_costs[i], &mut rows);
    }
    for j in 0..m_f {
        let mut up = vec![0.0; dim];
        up[factor(j)] = 1.0;
        rows.push((up.clone(), 1.0));
        rows.push((up.iter().map(|c| -c).collect(), 1.0));
    }
    let mut unit = vec![0.0; dim];
    unit[one] = 1.0;
    eq(unit, 1.0, &mut rows);

    let a = Matrix::from_rows(rows.iter().map(|(c, _)| c.clone()).collect());
    let b = rows.into_iter().map(|(_, rhs)| rhs).collect();
    let mut mask = vec![false; dim];
    for i in 0..n {
        mask[ret(i)] = true;
        mask[cost(i)] = true;
    }
    let xi = UncertaintySet { dim, a, b, observable_mask: mask };

    // Worst-case per-project cost, for the subset big-M rows.
    let worst_cost: Vec<f64> = (0..n)
        .map(|i| {
            let spread: f64 = (0..m_f).map(|j| rnd.cost_loadings[(i, j)].abs()).sum::<f64>() / 2.0;
            rnd.nominal_costs[i] * (1.0 + spread)
        })
        .collect();

    // Constraint rows: w^r + y <= 1 per project, then one row per non-empty
    // subset S: sum_{i in S} [M_i (w_i + y_i) + xi^c_i] <= B + sum_{i in S} M_i.
    let l = n + ((1usize << n) - 1);
    let mut cons_w = Matrix::zeros(l, dim);
    let mut cons_y = Matrix::zeros(l, n);
    let mut h = Matrix::zeros(l, dim);
    for i in 0..n {
        cons_w[(i, ret(i))] = 1.0;
        cons_y[(i, i)] = 1.0;
        h[(i, one)] = 1.0;
    }
    for s in 1..(1usize << n) {
        let row = n + s - 1;
        let mut m_sum = 0.0;
        for i in 0..n {
            if (s >> i) & 1 == 1 {
                cons_w[(row, ret(i))] = worst_cost[i];
                cons_y[(row, i)] = worst_cost[i];
                h[(row, cost(i))] = -1.0;
                m_sum += worst_cost[i];
            }
        }
        h[(row, one)] = rnd.budget + m_sum;
    }

    // Measurement set: costs observed exactly when returns are (one w^r).
    let mut set_w = BinaryFeasibleSet::free(dim).mask_zero(&xi.observable_mask);
    for i in 0..n {
        let mut coeffs = vec![0.0; dim];
        coeffs[ret(i)] = 1.0;
        coeffs[cost(i)] = -1.0;
        set_w.push(coeffs, Relation::Eq, 0.0);
    }

    let mut cost_w = Matrix::zeros(dim, dim);
    let mut cost_y = Matrix::zeros(dim, n);
    for i in 0..n {
        cost_w[(ret(i), ret(i))] = 1.0;
        cost_y[(ret(i), i)] = rnd.theta;
    }

    Ok(DdidInstance {
        sense: Sense::Maximize,
        cost_x: Matrix::zeros(dim, 0),
        cost_w,
        cost_y,
        cons_x: Matrix::zeros(l, 0),
        cons_w,
        cons_y,
        rhs: RhsMode::Uncertain(h),
        xi,
        set_x: BinaryFeasibleSet::free(0),
        set_w,
        set_y: BinaryFeasibleSet::free(n),
    })
}

/// Reads a headered CSV of reals and normalizes each column by its infinity
/// norm. Zero columns are left unscaled and reported in the warning list.
pub fn load_items_csv(path: impl AsRef<std::path::Path>) -> Result<(Matrix, Vec<String>, Vec<String>), InstanceError> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: Result<Vec<f64>, InstanceError> = record
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| InstanceError::BadField(f.to_string())))
            .collect();
        data.push(row?);
    }
    if data.is_empty() {
        return Err(InstanceError::BadParameter("csv has no data rows".into()));
    }
    let mut m = Matrix::from_rows(data);
    let mut warnings = Vec::new();
    for j in 0..m.cols {
        let norm = (0..m.rows).map(|i| m[(i, j)].abs()).fold(0.0_f64, f64::max);
        if norm == 0.0 {
            warnings.push(format!("column {:?} is identically zero and was left unscaled", headers[j]));
        } else {
            for i in 0..m.rows {
                m[(i, j)] /= norm;
            }
        }
    }
    Ok((m, headers, warnings))
}
