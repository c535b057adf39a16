//! Shared fixtures: the two golden examples and a seeded family of small
//! random instances used by the oracle-agreement suites.

#![allow(dead_code)]

use ddid_core::matrix::Matrix;
use ddid_core::model::{BinaryFeasibleSet, DdidInstance, Relation, RhsMode, Sense, UncertaintySet};

/// The two-coordinate observation-cost example: minimize
/// `(xi1 + xi2)(y2 - y1) + d1 w1 + d2 w2` subject to `y1 >= xi1` on the
/// observation-consistent slice and `y1 + y2 = 1`, with
/// `Xi = [-1,1] x [-1.1,1]`. The constant observation costs ride on an
/// auxiliary coordinate pinned to one.
pub fn example_observation_cost(d1: f64, d2: f64) -> DdidInstance {
    let dim = 3; // xi1, xi2, unit
    let xi = UncertaintySet::box_set(&[(-1.0, 1.0), (-1.1, 1.0), (1.0, 1.0)], vec![true, true, false]);

    // objective: (xi1 + xi2)(y2 - y1) + d1 w1 + d2 w2
    let mut cost_y = Matrix::zeros(dim, 2);
    cost_y[(0, 0)] = -1.0;
    cost_y[(0, 1)] = 1.0;
    cost_y[(1, 0)] = -1.0;
    cost_y[(1, 1)] = 1.0;
    let mut cost_w = Matrix::zeros(dim, dim);
    cost_w[(2, 0)] = d1;
    cost_w[(2, 1)] = d2;

    // uncertain row: -y1 <= -xi1
    let mut cons_y = Matrix::zeros(1, 2);
    cons_y[(0, 0)] = -1.0;
    let mut h = Matrix::zeros(1, dim);
    h[(0, 0)] = -1.0;

    DdidInstance {
        sense: Sense::Minimize,
        cost_x: Matrix::zeros(dim, 0),
        cost_w,
        cost_y,
        cons_x: Matrix::zeros(1, 0),
        cons_w: Matrix::zeros(1, dim),
        cons_y,
        rhs: RhsMode::Uncertain(h),
        xi,
        set_x: BinaryFeasibleSet::free(0),
        set_w: BinaryFeasibleSet::free(dim).mask_zero(&[true, true, false]),
        set_y: BinaryFeasibleSet::simplex(2),
    }
}

/// Same instance with the measurement decision pinned.
pub fn example_observation_cost_fixed_w(d1: f64, d2: f64, w: [u8; 2]) -> DdidInstance {
    let mut inst = example_observation_cost(d1, d2);
    inst.set_w = BinaryFeasibleSet::fixed(&[w[0], w[1], 0]);
    inst
}

/// Objective-uncertainty variant of the example at a fixed `w`: coordinates
/// the recourse cannot adapt to are robustified away, leaving the constant
/// row `y1 >= max xi1 = 1` whenever `w1 = 0`.
pub fn example_observation_cost_objective(d1: f64, d2: f64, w: [u8; 2]) -> DdidInstance {
    let mut inst = example_observation_cost(d1, d2);
    let mut cons_y = Matrix::zeros(1, 2);
    cons_y[(0, 0)] = -1.0;
    let rhs = if w[0] == 1 {
        // xi1 observed: with the slice pinned the row stays uncertain; the
        // objective pipeline cannot host it, so callers only use w1 = 0 here.
        panic!("objective-form variant requires w1 = 0");
    } else {
        vec![-1.0]
    };
    inst.cons_y = cons_y;
    inst.rhs = RhsMode::Constant(rhs);
    inst.set_w = BinaryFeasibleSet::fixed(&[w[0], w[1], 0]);
    inst
}

/// The threshold example: zero objective, `xi - eps <= y(xi) <= 1 + xi - eps`
/// componentwise over `Xi = [-1,1]^2`, with binary recourse. Four quadrant
/// responses are needed, so four policies are necessary and sufficient.
pub fn example_threshold(eps: f64) -> DdidInstance {
    let dim = 3; // xi1, xi2, unit
    let xi = UncertaintySet::box_set(&[(-1.0, 1.0), (-1.0, 1.0), (1.0, 1.0)], vec![true, true, false]);

    // rows per coordinate i: -y_i <= -xi_i + eps*unit ; y_i <= xi_i + (1-eps)*unit
    let mut cons_y = Matrix::zeros(4, 2);
    let mut h = Matrix::zeros(4, dim);
    for i in 0..2 {
        cons_y[(2 * i, i)] = -1.0;
        h[(2 * i, i)] = -1.0;
        h[(2 * i, 2)] = eps;
        cons_y[(2 * i + 1, i)] = 1.0;
        h[(2 * i + 1, i)] = 1.0;
        h[(2 * i + 1, 2)] = 1.0 - eps;
    }

    DdidInstance {
        sense: Sense::Minimize,
        cost_x: Matrix::zeros(dim, 0),
        cost_w: Matrix::zeros(dim, dim),
        cost_y: Matrix::zeros(dim, 2),
        cons_x: Matrix::zeros(4, 0),
        cons_w: Matrix::zeros(4, dim),
        cons_y,
        rhs: RhsMode::Uncertain(h),
        xi,
        set_x: BinaryFeasibleSet::free(0),
        set_w: BinaryFeasibleSet::free(dim).mask_zero(&[true, true, false]),
        set_y: BinaryFeasibleSet::free(2),
    }
}

pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.next() * ((hi - lo + 1) as f64)) as i64
    }
}

/// Small random objective-uncertainty instance: box uncertainty plus one
/// budget row, integer data, at most one x variable and two recourse items.
pub fn random_objective_instance(seed: u64) -> DdidInstance {
    let mut r = Lcg(seed);
    let n_xi = 2 + (seed % 3) as usize; // 2..4
    let n_x = (seed % 2) as usize;
    let n_y = 2;

    let bounds: Vec<(f64, f64)> = (0..n_xi).map(|_| (-1.0, 1.0)).collect();
    let mut xi = UncertaintySet::box_set(&bounds, vec![true; n_xi]);
    // one extra diagonal row keeps the set from being a plain box
    let mut extra = vec![0.0; n_xi];
    for e in extra.iter_mut() {
        *e = r.int(0, 1) as f64;
    }
    if extra.iter().any(|&e| e != 0.0) {
        let rows = xi.a.rows;
        let mut a = Matrix::zeros(rows + 1, n_xi);
        a.data[..rows * n_xi].copy_from_slice(&xi.a.data);
        for (j, &e) in extra.iter().enumerate() {
            a[(rows, j)] = e;
        }
        xi.a = a;
        xi.b.push(1.0 + r.next());
    }

    let mut mat = |rows: usize, cols: usize, r: &mut Lcg| {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data.iter_mut() {
            *v = r.int(-2, 2) as f64;
        }
        m
    };
    let cost_x = mat(n_xi, n_x, &mut r);
    let cost_w = mat(n_xi, n_xi, &mut r);
    let cost_y = mat(n_xi, n_y, &mut r);

    // one deterministic budget row that keeps at least y = 0 feasible
    let cons_x = mat(1, n_x, &mut r);
    let mut cons_w = Matrix::zeros(1, n_xi);
    for j in 0..n_xi {
        cons_w[(0, j)] = r.int(0, 1) as f64;
    }
    let mut cons_y = Matrix::zeros(1, n_y);
    for j in 0..n_y {
        cons_y[(0, j)] = r.int(0, 2) as f64;
    }
    let h = vec![2.0 + r.int(0, 2) as f64];

    let set_w = if n_xi >= 4 {
        let mut s = BinaryFeasibleSet::free(n_xi);
        s.push(vec![1.0; n_xi], Relation::Le, 1.0);
        s
    } else {
        BinaryFeasibleSet::free(n_xi)
    };

    DdidInstance {
        sense: if seed % 5 == 0 { Sense::Maximize } else { Sense::Minimize },
        cost_x,
        cost_w,
        cost_y,
        cons_x,
        cons_w,
        cons_y,
        rhs: RhsMode::Constant(h),
        xi,
        set_x: BinaryFeasibleSet::free(n_x),
        set_w,
        set_y: BinaryFeasibleSet::free(n_y),
    }
}
