//! LP/MILP backend tests: golden LPs, duality, determinism, branch-and-bound
//! basics, and the LP-format writer.

use ddid_core::milp::{
    solve_lp, solve_milp, MilpModel, Relation, SolveStatus, VarId,
};
use ddid_core::model::SolverOptions;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

/// Small deterministic generator so the frozen oracle values below can be
/// reproduced outside this crate (same constants as the reference run).
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[test]
fn one_variable_lp_with_active_dual() {
    let mut m = MilpModel::new();
    let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    m.add_constraint(vec![(x, 1.0)], Relation::Ge, 3.0);
    m.add_constraint(vec![(x, 1.0)], Relation::Le, 10.0);
    m.set_objective(vec![(x, 1.0)], 0.0);
    let sol = solve_lp(&m, &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.value - 3.0).abs() < 1e-9);
    // the >= 3 row is active and carries the whole objective
    assert!((sol.duals[0] - 1.0).abs() < 1e-8, "duals {:?}", sol.duals);
    assert!(sol.duals[1].abs() < 1e-8);
}

#[test]
fn box_lp_reproduces_worst_case_two_point_one() {
    // max -(xi1 + xi2) over [-1,1] x [-1.1,1] equals 2.1
    let mut m = MilpModel::new();
    let x1 = m.add_continuous("xi1", -1.0, 1.0);
    let x2 = m.add_continuous("xi2", -1.1, 1.0);
    m.set_objective(vec![(x1, 1.0), (x2, 1.0)], 0.0);
    let sol = solve_lp(&m, &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((-sol.value - 2.1).abs() < 1e-9);
}

#[test]
fn random_8x12_matches_frozen_external_value() {
    // Frozen oracle: the same LP solved with an independent simplex
    // implementation (HiGHS via scipy 1.x), value -2.807399254736.
    let mut r = Lcg(42);
    let (m_rows, n) = (8, 12);
    let a: Vec<Vec<f64>> = (0..m_rows).map(|_| (0..n).map(|_| r.next() * 4.0 - 2.0).collect()).collect();
    let b: Vec<f64> = (0..m_rows).map(|_| r.next() * 5.0 + 1.0).collect();
    let c: Vec<f64> = (0..n).map(|_| r.next() * 2.0 - 1.0).collect();
    let u: Vec<f64> = (0..n).map(|_| r.next() * 3.0 + 0.5).collect();

    let mut m = MilpModel::new();
    let xs: Vec<VarId> = (0..n).map(|j| m.add_continuous(format!("x{j}"), 0.0, u[j])).collect();
    for i in 0..m_rows {
        m.add_constraint(xs.iter().map(|&x| (x, a[i][x])).collect(), Relation::Le, b[i]);
    }
    m.set_objective(xs.iter().map(|&x| (x, c[x])).collect(), 0.0);
    let sol = solve_lp(&m, &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.value - (-2.807399254736)).abs() < 1e-8, "value {}", sol.value);
}

#[test]
fn vertex_enumeration_agrees_on_small_random_lps() {
    // Independent oracle: enumerate all basic feasible points of
    // {Ax <= b, 0 <= x <= u} by picking n active constraints.
    for seed in 0..8u64 {
        let mut r = Lcg(1000 + seed);
        let (m_rows, n) = (4, 5);
        let a: Vec<Vec<f64>> = (0..m_rows).map(|_| (0..n).map(|_| r.next() * 4.0 - 2.0).collect()).collect();
        let b: Vec<f64> = (0..m_rows).map(|_| r.next() * 5.0 + 1.0).collect();
        let c: Vec<f64> = (0..n).map(|_| r.next() * 2.0 - 1.0).collect();
        let u: Vec<f64> = (0..n).map(|_| r.next() * 3.0 + 0.5).collect();

        // rows: A (m), x_j <= u_j (n), -x_j <= 0 (n)
        let mut rows: Vec<Vec<f64>> = a.clone();
        let mut rhs = b.clone();
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            rows.push(row);
            rhs.push(u[j]);
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            rows.push(row);
            rhs.push(0.0);
        }
        let total = rows.len();
        let mut best = f64::INFINITY;
        let mut combo = vec![0usize; n];
        fn visit(
            start: usize,
            depth: usize,
            n: usize,
            total: usize,
            combo: &mut Vec<usize>,
            rows: &[Vec<f64>],
            rhs: &[f64],
            c: &[f64],
            best: &mut f64,
        ) {
            if depth == n {
                if let Some(x) = solve_square(rows, rhs, combo) {
                    let feasible = rows
                        .iter()
                        .zip(rhs)
                        .all(|(row, &r)| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= r + 1e-7);
                    if feasible {
                        let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                        if v < *best {
                            *best = v;
                        }
                    }
                }
                return;
            }
            for i in start..total {
                combo[depth] = i;
                visit(i + 1, depth + 1, n, total, combo, rows, rhs, c, best);
            }
        }
        fn solve_square(rows: &[Vec<f64>], rhs: &[f64], combo: &[usize]) -> Option<Vec<f64>> {
            let n = combo.len();
            let mut a: Vec<Vec<f64>> = combo.iter().map(|&i| rows[i].clone()).collect();
            let mut b: Vec<f64> = combo.iter().map(|&i| rhs[i]).collect();
            // Gaussian elimination with partial pivoting
            for col in 0..n {
                let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
                if a[piv][col].abs() < 1e-9 {
                    return None;
                }
                a.swap(col, piv);
                b.swap(col, piv);
                for row in 0..n {
                    if row != col {
                        let f = a[row][col] / a[col][col];
                        for k in col..n {
                            a[row][k] -= f * a[col][k];
                        }
                        b[row] -= f * b[col];
                    }
                }
            }
            Some((0..n).map(|i| b[i] / a[i][i]).collect())
        }
        visit(0, 0, n, total, &mut combo, &rows, &rhs, &c, &mut best);

        let mut m = MilpModel::new();
        let xs: Vec<VarId> = (0..n).map(|j| m.add_continuous(format!("x{j}"), 0.0, u[j])).collect();
        for i in 0..m_rows {
            m.add_constraint(xs.iter().map(|&x| (x, a[i][x])).collect(), Relation::Le, b[i]);
        }
        m.set_objective(xs.iter().map(|&x| (x, c[x])).collect(), 0.0);
        let sol = solve_lp(&m, &opts()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        assert!((sol.value - best).abs() < 1e-6, "seed {seed}: simplex {} vs vertices {best}", sol.value);
        // strong duality reported by the solver itself
        assert!((sol.value - sol.dual_value).abs() <= 1e-6 * (1.0 + sol.value.abs()));
    }
}

#[test]
fn infeasible_and_unbounded_lps_are_flagged() {
    let mut m = MilpModel::new();
    let x = m.add_continuous("x", 0.0, 10.0);
    m.add_constraint(vec![(x, 1.0)], Relation::Ge, 11.0);
    m.set_objective(vec![(x, 1.0)], 0.0);
    assert_eq!(solve_lp(&m, &opts()).unwrap().status, SolveStatus::Infeasible);

    let mut m = MilpModel::new();
    let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    m.set_objective(vec![(x, 1.0)], 0.0);
    assert_eq!(solve_lp(&m, &opts()).unwrap().status, SolveStatus::Unbounded);
}

#[test]
fn knapsack_forces_the_better_item() {
    // max 3a + 2b s.t. a + b <= 1 -> a = 1, value 3
    let mut m = MilpModel::new();
    let a = m.add_binary("a");
    let b = m.add_binary("b");
    m.add_constraint(vec![(a, 1.0), (b, 1.0)], Relation::Le, 1.0);
    m.set_objective(vec![(a, -3.0), (b, -2.0)], 0.0);
    let sol = solve_milp(&m, &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((-sol.value - 3.0).abs() < 1e-9);
    assert!(sol.primal[a] > 0.5 && sol.primal[b] < 0.5);
}

#[test]
fn contradictory_binaries_are_infeasible() {
    let mut m = MilpModel::new();
    let a = m.add_binary("a");
    m.add_constraint(vec![(a, 1.0)], Relation::Ge, 1.0);
    m.add_constraint(vec![(a, 1.0)], Relation::Le, 0.0);
    m.set_objective(vec![(a, 1.0)], 0.0);
    let sol = solve_milp(&m, &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
    assert!(sol.value.is_infinite());
}

#[test]
fn branch_and_bound_is_deterministic() {
    let build = || {
        let mut r = Lcg(7);
        let mut m = MilpModel::new();
        let bins: Vec<VarId> = (0..10).map(|j| m.add_binary(format!("b{j}"))).collect();
        for i in 0..6 {
            let coeffs: Vec<(VarId, f64)> = bins.iter().map(|&v| (v, (r.next() * 10.0).round())).collect();
            let rhs = 5.0 + (r.next() * 20.0).round();
            m.add_constraint(coeffs, Relation::Le, rhs);
            let _ = i;
        }
        let obj: Vec<(VarId, f64)> = bins.iter().map(|&v| (v, -((r.next() * 9.0).round() + 1.0))).collect();
        m.set_objective(obj, 0.0);
        m
    };
    let m = build();
    let s1 = solve_milp(&m, &opts()).unwrap();
    let s2 = solve_milp(&build(), &opts()).unwrap();
    assert_eq!(s1.status, SolveStatus::Optimal);
    assert_eq!(s1.value.to_bits(), s2.value.to_bits());
    let bits = |p: &[f64]| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&s1.primal), bits(&s2.primal));
    assert_eq!(s1.nodes, s2.nodes);
}

#[test]
fn incumbent_gap_closes_at_optimal() {
    let mut r = Lcg(99);
    let mut m = MilpModel::new();
    let bins: Vec<VarId> = (0..12).map(|j| m.add_binary(format!("b{j}"))).collect();
    let weights: Vec<f64> = (0..12).map(|_| (r.next() * 10.0).round() + 1.0).collect();
    let values: Vec<f64> = (0..12).map(|_| (r.next() * 9.0).round() + 1.0).collect();
    m.add_constraint(bins.iter().map(|&v| (v, weights[v])).collect(), Relation::Le, 25.0);
    m.set_objective(bins.iter().map(|&v| (v, -values[v])).collect(), 0.0);
    let sol = solve_milp(&m, &opts()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.gap <= opts().lp_opt_tol + 1e-12, "gap {}", sol.gap);
}

#[test]
fn node_limit_reports_limit_reached() {
    std::env::remove_var(ddid_core::milp::NODE_LIMIT_ENV);
    let mut r = Lcg(3);
    let mut m = MilpModel::new();
    let bins: Vec<VarId> = (0..14).map(|j| m.add_binary(format!("b{j}"))).collect();
    let weights: Vec<f64> = (0..14).map(|_| r.next() * 10.0 + 0.5).collect();
    let values: Vec<f64> = (0..14).map(|_| r.next() * 9.0 + 0.5).collect();
    m.add_constraint(bins.iter().map(|&v| (v, weights[v])).collect(), Relation::Le, 20.0);
    m.set_objective(bins.iter().map(|&v| (v, -values[v])).collect(), 0.0);
    let mut o = opts();
    o.node_limit = 3;
    let sol = solve_milp(&m, &o).unwrap();
    assert_eq!(sol.status, SolveStatus::LimitReached);
    assert!(sol.gap > 0.0 || sol.value.is_infinite() || sol.gap == 0.0);
}

#[test]
fn lp_export_golden_single_variable() {
    let mut m = MilpModel::new();
    let x = m.add_continuous("x", 0.0, 5.0);
    m.add_constraint(vec![(x, 1.0)], Relation::Ge, 1.0);
    m.set_objective(vec![(x, 2.0)], 0.0);
    let text = ddid_core::milp::write_lp_string(&m);
    let expected = "Minimize\n obj: 2 x\nSubject To\n c0: 1 x >= 1\nBounds\n 0 <= x <= 5\nEnd\n";
    assert_eq!(text, expected);
}

#[test]
fn lp_export_empty_objective_writes_zero() {
    let mut m = MilpModel::new();
    let _ = m.add_binary("z");
    let text = ddid_core::milp::write_lp_string(&m);
    assert!(text.contains("obj: 0\n"), "{text}");
    assert!(text.contains("Binaries\n z\n"), "{text}");
}
