//! Brute-force evaluators certifying the reformulations on small instances.
//!
//! These enumerate binary feasible sets outright and price fixed decisions
//! with small LPs; any disagreement with the reformulation solvers beyond
//! tolerance is a release blocker.

use crate::kadapt::{evaluate_policies_lp_min, objective, KAdaptError};
use crate::model::{BinaryFeasibleSet, DdidInstance, RhsMode, SolverOptions};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("enumeration of 2^{dim} members exceeds the cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error(transparent)]
    KAdapt(#[from] KAdaptError),
}

/// All members of a binary feasible set in lexicographic order (coordinate 0
/// most significant). An empty result means the set has no members.
pub fn enumerate_members(set: &BinaryFeasibleSet, opts: &SolverOptions) -> Result<Vec<Vec<u8>>, OracleError> {
    if set.dim >= usize::BITS as usize - 1 || (1usize << set.dim) > opts.enum_cap {
        return Err(OracleError::TooLarge { dim: set.dim, cap: opts.enum_cap });
    }
    let mut out = Vec::new();
    let dim = set.dim;
    for code in 0..(1usize << dim) {
        let v: Vec<u8> = (0..dim).map(|i| ((code >> (dim - 1 - i)) & 1) as u8).collect();
        if set.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// k-subsets of {0..n-1} in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Multisets of size k over {0..n-1} (non-decreasing index vectors).
pub(crate) fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut cur = vec![0usize; k];
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + 1 < n {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[i];
                }
                break;
            }
            if i == 0 {
                return out;
            }
        }
    }
}

/// Exact K-adaptability value under objective uncertainty by enumerating
/// first-stage tuples and unordered policy subsets (the value is invariant
/// under policy permutation), each scored with the evaluation LP. Returns the
/// value in the instance's original sense together with the best tuple.
pub fn brute_force_kadapt_objective(
    inst: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<(f64, Option<(Vec<u8>, Vec<u8>, Vec<Vec<u8>>)>), OracleError> {
    let canon = inst.canonicalize();
    let (v, best) = brute_force_kadapt_objective_min(&canon, k, opts)?;
    Ok((inst.report_sign() * v, best))
}

pub(crate) fn brute_force_kadapt_objective_min(
    canon: &DdidInstance,
    k: usize,
    opts: &SolverOptions,
) -> Result<(f64, Option<(Vec<u8>, Vec<u8>, Vec<Vec<u8>>)>), OracleError> {
    let RhsMode::Constant(h) = &canon.rhs else {
        return Err(OracleError::KAdapt(KAdaptError::Rejected(
            "objective-uncertainty oracle requires a constant right-hand side".into(),
        )));
    };
    let xs = enumerate_members(&canon.set_x, opts)?;
    let ws = enumerate_members(&canon.set_w, opts)?;
    let ys = enumerate_members(&canon.set_y, opts)?;

    let mut best: Option<(f64, Vec<u8>, Vec<u8>, Vec<Vec<u8>>)> = None;
    for x in &xs {
        for w in &ws {
            let feasible: Vec<&Vec<u8>> = ys
                .iter()
                .filter(|y| {
                    canon.stage_lhs(x, w, y).iter().zip(h).all(|(lhs, rhs)| *lhs <= rhs + opts.lp_feas_tol)
                })
                .collect();
            if feasible.is_empty() {
                continue;
            }
            let subset = k.min(feasible.len());
            for combo in combinations(feasible.len(), subset) {
                let mut policies: Vec<Vec<u8>> = combo.iter().map(|&i| feasible[i].clone()).collect();
                while policies.len() < k {
                    policies.push(policies.last().unwrap().clone());
                }
                let v = evaluate_policies_lp_min(canon, x, w, &policies, opts)?;
                if best.as_ref().map_or(true, |(bv, ..)| v < bv - 1e-12) {
                    best = Some((v, x.clone(), w.clone(), policies));
                }
            }
        }
    }
    Ok(match best {
        Some((v, x, w, p)) => (v, Some((x, w, p))),
        None => (f64::INFINITY, None),
    })
}

/// True fully adaptive two-stage value: the K = |Y| evaluation, minimized over
/// first-stage decisions (with `w` optionally pinned). Original sense.
pub fn exact_two_stage_objective(
    inst: &DdidInstance,
    w_fixed: Option<&[u8]>,
    opts: &SolverOptions,
) -> Result<f64, OracleError> {
    let canon = inst.canonicalize();
    let xs = enumerate_members(&canon.set_x, opts)?;
    let ws = match w_fixed {
        Some(w) => vec![w.to_vec()],
        None => enumerate_members(&canon.set_w, opts)?,
    };
    let mut best = f64::INFINITY;
    for x in &xs {
        for w in &ws {
            let v = objective::full_policy_value_min(&canon, x, w, opts)?;
            best = best.min(v);
        }
    }
    Ok(inst.report_sign() * best)
}

/// True worst-case piecewise-linear (regret) value of a fixed `w`: the
/// feasibility evaluation with all |Y| candidate policies, minimized over x
/// and optionally over w. Canonical minimize sense is assumed for `pwl`.
pub fn true_worst_case_regret(
    inst: &DdidInstance,
    pwl: &crate::kadapt::pwl::PwlObjective,
    w_fixed: Option<&[u8]>,
    opts: &SolverOptions,
) -> Result<f64, OracleError> {
    let canon = inst.canonicalize();
    let xs = enumerate_members(&canon.set_x, opts)?;
    let ws = match w_fixed {
        Some(w) => vec![w.to_vec()],
        None => enumerate_members(&canon.set_w, opts)?,
    };
    let ys = enumerate_members(&canon.set_y, opts)?;
    if ys.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mut best = f64::INFINITY;
    for x in &xs {
        for w in &ws {
            let v = crate::kadapt::ccg::evaluate_pwl_fixed(&canon, pwl, x, w, &ys, opts)?;
            best = best.min(v);
        }
    }
    Ok(best)
}

/// Strong-duality audit: the primal evaluation LP and the dual block LP of a
/// fixed decision tuple must agree within 1e-6.
pub fn verify_duality_block(
    inst: &DdidInstance,
    x: &[u8],
    w: &[u8],
    policies: &[Vec<u8>],
    opts: &SolverOptions,
) -> Result<bool, OracleError> {
    let canon = inst.canonicalize();
    let primal = evaluate_policies_lp_min(&canon, x, w, policies, opts)?;
    if !primal.is_finite() {
        // No feasible policy: the dual block is unbounded; duality holds
        // vacuously and the audit only checks the finite case.
        return Ok(true);
    }
    let (dual, _) = objective::solve_dual_block_lp(&canon, x, w, policies, opts)?;
    Ok((primal - dual).abs() <= 1e-6 * (1.0 + primal.abs()))
}
