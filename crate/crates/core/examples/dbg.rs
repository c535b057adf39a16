use ddid_core::kadapt::objective::*;
use ddid_core::kadapt::*;
use ddid_core::model::*;
use ddid_core::oracles;

#[path = "../tests/common/mod.rs"]
mod common;

fn main() {
    let o = SolverOptions::default();
    // duality failure: seed 4, w = [0,1,0]
    let inst = common::random_objective_instance(4);
    let canon = inst.canonicalize();
    println!("n_xi={} n_x={} n_y={} sense={:?}", canon.n_xi(), canon.n_x(), canon.n_y(), inst.sense);
    let ys = oracles::enumerate_members(&canon.set_y, &o).unwrap();
    let xs = oracles::enumerate_members(&canon.set_x, &o).unwrap();
    let w = vec![0u8, 1, 0];
    let x = &xs[0];
    let policies = vec![ys[1].clone(), ys[2].clone()];
    let p = evaluate_policies_lp(&inst, x, &w, &policies, &o).unwrap();
    let pc = evaluate_policies_lp(&canon, x, &w, &policies, &o).unwrap();
    let (d, _) = solve_dual_block_lp(&canon, x, &w, &policies, &o).unwrap();
    println!("primal(orig sense)={p} primal(canon)={pc} dual={d}");

    // monotonicity failure: seeds 1..3
    for seed in [1u64, 2, 3] {
        let inst = common::random_objective_instance(seed);
        let full = oracles::exact_two_stage_objective(&inst, None, &o).unwrap();
        print!("seed {seed} full={full} K:");
        for k in 1..=4 {
            let sol = solve_kadapt_objective(&inst, k, &o).unwrap();
            print!(" {:?}/{:.4}", sol.status, sol.value);
            let (bf, _) = oracles::brute_force_kadapt_objective(&inst, k, &o).unwrap();
            print!("(bf {:.4})", bf);
        }
        println!();
    }
}
