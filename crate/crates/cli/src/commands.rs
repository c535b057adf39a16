use std::fmt::Write as _;
use std::io::{BufRead, Write as _};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};

use ddid_core::io;
use ddid_core::kadapt::{self, ccg, constraint, multistage, objective, KAdaptSolution};
use ddid_core::milp::SolveStatus;
use ddid_core::model::{validate_instance, SolverOptions, SymmetryMode};
use ddid_core::{instances, oracles, speedups};

pub type CmdResult = Result<i32, Box<dyn std::error::Error>>;

fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::LimitReached => 3,
        _ => 1,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    PeUtility,
    PeRegret,
    Rnd,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Items I (pe families).
    #[arg(long, default_value_t = 10)]
    pub items: usize,
    /// Features J (pe families).
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    /// Budget of uncertainty on answer noise.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Number of questions asked.
    #[arg(long, default_value_t = 2)]
    pub questions: usize,
    /// Projects N (rnd family).
    #[arg(long, default_value_t = 3)]
    pub projects: usize,
    /// Risk factors M (rnd family).
    #[arg(long, default_value_t = 2)]
    pub factors: usize,
    /// Second-year return fraction (rnd family).
    #[arg(long, default_value_t = 0.8)]
    pub theta: f64,
    /// Load items from a headered CSV instead of sampling them.
    #[arg(long)]
    pub items_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path for the instance JSON; the pe-regret family also writes
    /// `<out>.pwl.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_generate(args: &GenerateArgs, json: bool) -> CmdResult {
    let opts = SolverOptions::default();
    let (inst, pwl, meta) = match args.family {
        Family::PeUtility | Family::PeRegret => {
            let pe = match &args.items_csv {
                Some(path) => {
                    let (items, _, warnings) = instances::load_items_csv(path)?;
                    for w in warnings {
                        eprintln!("warning: {w}");
                    }
                    instances::PeInstance::new(items, args.gamma, args.questions)?
                }
                None => instances::gen_synthetic_pe(args.items, args.features, args.gamma, args.questions, args.seed)?,
            };
            let meta = serde_json::json!({
                "family": if args.family == Family::PeUtility { "pe-utility" } else { "pe-regret" },
                "items": pe.num_items(), "features": pe.num_features(),
                "gamma": pe.gamma, "questions": pe.questions, "rho": pe.rho,
                "seed": args.seed,
            });
            match args.family {
                Family::PeUtility => (instances::build_pe_utility(&pe), None, meta),
                Family::PeRegret => {
                    let (inst, pwl) = instances::build_pe_regret(&pe)?;
                    (inst, Some(pwl), meta)
                }
                Family::Rnd => unreachable!(),
            }
        }
        Family::Rnd => {
            let rnd = instances::gen_synthetic_rnd(args.projects, args.factors, args.theta, args.seed)?;
            let meta = serde_json::json!({
                "family": "rnd", "projects": args.projects, "factors": args.factors,
                "theta": args.theta, "budget": rnd.budget, "seed": args.seed,
            });
            (instances::build_rnd_portfolio(&rnd)?, None, meta)
        }
    };

    let report = validate_instance(&inst, &opts);
    if !report.is_empty() {
        for issue in &report {
            eprintln!("validation: {issue}");
        }
        return Err("generated instance failed validation".into());
    }
    io::save_instance(&args.out, &inst, Some(meta.clone()))?;
    let mut pwl_path = None;
    if let Some(pwl) = &pwl {
        let p = args.out.with_extension("pwl.json");
        io::save_pwl(&p, pwl)?;
        pwl_path = Some(p);
    }
    if json {
        println!(
            "{}",
            serde_json::json!({
                "instance": args.out, "pwl": pwl_path, "metadata": meta,
                "n_xi": inst.n_xi(), "n_y": inst.n_y(), "rows": inst.n_rows(),
            })
        );
    } else {
        println!("wrote {}", args.out.display());
        if let Some(p) = pwl_path {
            println!("wrote {}", p.display());
        }
        println!("uncertain coordinates: {}  recourse dim: {}  stage rows: {}", inst.n_xi(), inst.n_y(), inst.n_rows());
    }
    Ok(0)
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Dualized MBLP for objective uncertainty.
    Objective,
    /// Epsilon-approximate MBLP for constraint uncertainty.
    Constraint,
    /// Monolithic piecewise-linear (regret) model.
    RegretMono,
    /// Column-and-constraint generation for the piecewise-linear model.
    RegretCcg,
    /// Two-period multistage mapping of the instance.
    Multistage,
    /// Greedy policy-freezing heuristic.
    Greedy,
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Piecewise objective JSON (required by the regret methods).
    #[arg(long)]
    pub pwl: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(short = 'K', long, default_value_t = 2)]
    pub k: usize,
    /// Inner-approximation margin for the constraint pipeline.
    #[arg(long)]
    pub eps: Option<f64>,
    /// CCG optimality tolerance.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub no_symmetry: bool,
    #[arg(long)]
    pub node_limit: Option<usize>,
    #[arg(long)]
    pub time_limit: Option<u64>,
    /// Write the solution JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the CCG iteration log (CSV) here.
    #[arg(long)]
    pub ccg_log: Option<PathBuf>,
}

fn solver_options(args: &SolveArgs) -> SolverOptions {
    let mut opts = SolverOptions::default();
    opts.eps_feasibility = args.eps;
    if let Some(d) = args.delta {
        opts.ccg_delta = d;
    }
    if args.no_symmetry {
        opts.symmetry_breaking = SymmetryMode::Off;
    }
    if let Some(n) = args.node_limit {
        opts.node_limit = n;
    }
    if let Some(t) = args.time_limit {
        opts.time_limit = t;
    }
    opts
}

pub fn run_solve(args: &SolveArgs, json: bool) -> CmdResult {
    let (inst, _meta) = io::load_instance(&args.instance)?;
    let opts = solver_options(args);
    let started = Instant::now();
    let need_pwl = || -> Result<ddid_core::kadapt::pwl::PwlObjective, Box<dyn std::error::Error>> {
        let path = args.pwl.as_ref().ok_or("--pwl is required for the regret methods")?;
        Ok(io::load_pwl(path)?)
    };

    let mut ccg_state = None;
    let sol: KAdaptSolution = match args.method {
        Method::Objective => objective::solve_kadapt_objective(&inst, args.k, &opts)?,
        Method::Constraint => constraint::solve_kadapt_constraint(&inst, args.k, &opts)?,
        Method::RegretMono => ccg::solve_pwl_monolithic(&inst, &need_pwl()?, args.k, &opts)?,
        Method::RegretCcg => {
            let (sol, state) = ccg::ccg_solve(&inst, &need_pwl()?, args.k, &opts)?;
            ccg_state = Some(state);
            sol
        }
        Method::Greedy => match &args.pwl {
            Some(_) => speedups::greedy_solve_pwl(&inst, &need_pwl()?, args.k, &opts)?,
            None => speedups::greedy_solve(&inst, args.k, &opts)?,
        },
        Method::Multistage => {
            let ms = multistage::two_stage_as_multistage(&inst)?;
            let msol = multistage::solve_multistage(&ms, args.k, &opts)?;
            let tree = io::multistage_tree_json(&msol);
            if let Some(out) = &args.out {
                std::fs::write(out, serde_json::to_string_pretty(&tree)? + "\n")?;
            }
            if json {
                println!("{tree}");
            } else {
                let sign = inst.report_sign();
                println!("status: {:?}", msol.status);
                println!("value: {}", sign * msol.value);
                println!("nodes: {}   wall: {:.1} ms", msol.nodes, started.elapsed().as_secs_f64() * 1e3);
            }
            return Ok(exit_code(msol.status));
        }
    };

    if let (Some(path), Some(state)) = (&args.ccg_log, &ccg_state) {
        std::fs::write(path, io::ccg_state_csv(state))?;
    }
    if let Some(out) = &args.out {
        io::save_solution(out, &sol)?;
    }
    if json {
        print!("{}", io::solution_to_string(&sol)?);
    } else {
        println!("status: {:?}   method: {:?}", sol.status, sol.method);
        if sol.value.is_finite() {
            println!("value: {}", sol.value);
        } else {
            println!("value: infeasible (+/- infinity)");
        }
        println!("w: {:?}", sol.w);
        for (k, y) in sol.policies.iter().enumerate() {
            println!("policy {}: {:?}", k + 1, y);
        }
        if let Some(state) = &ccg_state {
            println!("ccg iterations: {}   bounds: [{}, {}]", state.iterations.len(), state.lower_bound, state.upper_bound);
        }
        for wmsg in &sol.warnings {
            println!("warning: {wmsg}");
        }
        println!("nodes: {}   wall: {:.1} ms", sol.nodes, started.elapsed().as_secs_f64() * 1e3);
    }
    Ok(exit_code(sol.status))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    /// Exact evaluation LP of the stored decisions.
    Lp,
    /// True worst-case utility with the full policy set (K = |Y|).
    TrueUtility,
    /// True worst-case regret with the full policy set.
    TrueRegret,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    #[arg(long)]
    pub pwl: Option<PathBuf>,
}

pub fn run_evaluate(args: &EvaluateArgs, json: bool) -> CmdResult {
    let (inst, _) = io::load_instance(&args.instance)?;
    let sol = io::load_solution(&args.solution)?;
    let opts = SolverOptions::default();
    let value = match args.mode {
        EvalMode::Lp => kadapt::evaluate_policies_lp(&inst, &sol.x, &sol.w, &sol.policies, &opts)?,
        EvalMode::TrueUtility => oracles::exact_two_stage_objective(&inst, Some(&sol.w), &opts)?,
        EvalMode::TrueRegret => {
            let path = args.pwl.as_ref().ok_or("--pwl is required for true-regret")?;
            let pwl = io::load_pwl(path)?;
            oracles::true_worst_case_regret(&inst, &pwl, Some(&sol.w), &opts)?
        }
    };
    if json {
        println!("{}", serde_json::json!({ "mode": format!("{:?}", args.mode), "value": value.is_finite().then_some(value) }));
    } else {
        println!("{value}");
    }
    Ok(0)
}

#[derive(Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Comma-separated item counts.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub items: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub features: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.0")]
    pub gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub questions: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    pub ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Skip the exact-oracle column (faster on larger grids).
    #[arg(long)]
    pub no_true_value: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_benchmark(args: &BenchmarkArgs, json: bool) -> CmdResult {
    if args.family == Family::Rnd {
        return Err("benchmark supports the preference-elicitation families".into());
    }
    let opts = SolverOptions::default();
    let mut csv = String::from("family,items,features,gamma,questions,k,seed,status,value,true_value,wall_ms,nodes,ccg_iters\n");
    let mut rows = 0usize;
    for &i in &args.items {
        for &j in &args.features {
            for &gamma in &args.gammas {
                for &q in &args.questions {
                    for &k in &args.ks {
                        for &seed in &args.seeds {
                            let pe = instances::gen_synthetic_pe(i, j, gamma, q, seed)?;
                            let started = Instant::now();
                            let (status, value, nodes, iters, true_value) = match args.family {
                                Family::PeUtility => {
                                    let inst = instances::build_pe_utility(&pe);
                                    let sol = objective::solve_kadapt_objective(&inst, k, &opts)?;
                                    let tv = (!args.no_true_value)
                                        .then(|| oracles::exact_two_stage_objective(&inst, Some(&sol.w), &opts))
                                        .transpose()?;
                                    (sol.status, sol.value, sol.nodes, 0usize, tv)
                                }
                                Family::PeRegret => {
                                    let (inst, pwl) = instances::build_pe_regret(&pe)?;
                                    let (sol, state) = ccg::ccg_solve(&inst, &pwl, k, &opts)?;
                                    let tv = (!args.no_true_value)
                                        .then(|| oracles::true_worst_case_regret(&inst, &pwl, Some(&sol.w), &opts))
                                        .transpose()?;
                                    (sol.status, sol.value, sol.nodes, state.iterations.len(), tv)
                                }
                                Family::Rnd => unreachable!(),
                            };
                            let wall = started.elapsed().as_secs_f64() * 1e3;
                            let fam = if args.family == Family::PeUtility { "pe-utility" } else { "pe-regret" };
                            let tv = true_value.map(|v| format!("{v}")).unwrap_or_default();
                            let _ = writeln!(csv, "{fam},{i},{j},{gamma},{q},{k},{seed},{status:?},{value},{tv},{wall:.1},{nodes},{iters}");
                            rows += 1;
                        }
                    }
                }
            }
        }
    }
    std::fs::write(&args.out, &csv)?;
    if json {
        println!("{}", serde_json::json!({ "out": args.out, "rows": rows }));
    } else {
        println!("wrote {} ({} rows)", args.out.display(), rows);
    }
    Ok(0)
}

#[derive(Args)]
pub struct ElicitArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    /// Read answers from a file (one value per line) instead of stdin.
    #[arg(long)]
    pub answers: Option<PathBuf>,
}

pub fn run_elicit(args: &ElicitArgs, json: bool) -> CmdResult {
    let (inst, _) = io::load_instance(&args.instance)?;
    let sol = io::load_solution(&args.solution)?;
    let opts = SolverOptions::default();

    let mut source: Box<dyn BufRead> = match &args.answers {
        Some(path) => Box::new(std::io::BufReader::new(std::fs::File::open(path)?)),
        None => Box::new(std::io::BufReader::new(std::io::stdin())),
    };

    let observed_coords: Vec<usize> = (0..inst.n_xi()).filter(|&i| sol.w[i] == 1).collect();
    let mut observed: Vec<(usize, f64)> = Vec::new();
    for &i in &observed_coords {
        loop {
            // Feasible range for this coordinate given earlier answers.
            let (lo, hi) = kadapt::observed_coordinate_range(&inst, &observed, i, &opts)?;
            print!("coordinate {i} in [{lo:.4}, {hi:.4}]? ");
            std::io::stdout().flush()?;
            let mut line = String::new();
            if source.read_line(&mut line)? == 0 {
                return Err("ran out of answers".into());
            }
            let line = line.trim();
            match line.parse::<f64>() {
                Ok(v) if v >= lo - 1e-9 && v <= hi + 1e-9 => {
                    observed.push((i, v));
                    println!();
                    break;
                }
                Ok(v) => {
                    println!("\n{v} is outside the consistent range [{lo:.4}, {hi:.4}]; try again");
                    if args.answers.is_some() {
                        return Err("answer file is inconsistent with the uncertainty set".into());
                    }
                }
                Err(_) => {
                    println!("\ncould not parse {line:?} as a number; try again");
                    if args.answers.is_some() {
                        return Err("answer file contains a non-numeric entry".into());
                    }
                }
            }
        }
    }

    let k = kadapt::select_recourse_policy(&inst, &sol, &observed, &opts)?;
    if json {
        println!("{}", serde_json::json!({ "policy": k + 1, "recourse": sol.policies[k], "observed": observed }));
    } else {
        println!("recommended policy {}: {:?}", k + 1, sol.policies[k]);
        if let Some(item) = sol.policies[k].iter().position(|&b| b == 1) {
            println!("(item {} in 1-based indexing)", item + 1);
        }
    }
    Ok(0)
}
