//! Terminal front end: generate instances, solve them with any of the
//! K-adaptability pipelines, evaluate solutions against the exact oracles,
//! run benchmark grids, and drive an interactive elicitation session.
//!
//! Exit codes: 0 optimal, 2 infeasible, 3 limit reached, 1 usage/data error.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ddid", version, about = "K-adaptability solvers for robust optimization with decision-dependent information discovery", long_about = None)]
struct Cli {
    /// Print machine-readable JSON on stdout instead of human-readable text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance and write it as JSON.
    Generate(commands::GenerateArgs),
    /// Solve an instance with one of the K-adaptability pipelines.
    Solve(commands::SolveArgs),
    /// Evaluate a stored solution with the exact oracles.
    Evaluate(commands::EvaluateArgs),
    /// Run a parameter grid and write one CSV row per solve.
    Benchmark(commands::BenchmarkArgs),
    /// Interactively elicit answers for the observed coordinates and
    /// recommend a policy.
    Elicit(commands::ElicitArgs),
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Generate(args) => commands::run_generate(args, cli.json),
        Command::Solve(args) => commands::run_solve(args, cli.json),
        Command::Evaluate(args) => commands::run_evaluate(args, cli.json),
        Command::Benchmark(args) => commands::run_benchmark(args, cli.json),
        Command::Elicit(args) => commands::run_elicit(args, cli.json),
    };
    std::process::exit(match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    });
}
