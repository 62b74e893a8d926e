// Guards are written `!(v > 0.0)` on purpose: the negated form also
// rejects NaN, which `v <= 0.0` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "dgt",
    version,
    about = "Distributed aggregative optimization: graph checks, tracking runs, step-size sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a mixing topology: stochasticity, connectivity, spectral gap
    ValidateGraph(ValidateGraphArgs),
    /// Run the tracking iteration and print a convergence summary
    Run(RunArgs),
    /// Sweep step sizes, tabulating the certified contraction radius
    /// against the fitted empirical rate
    RateReport(RateReportArgs),
    /// Contrast the cooperative optimum with the selfish stationary point
    /// on the built-in two-agent benchmark
    Example1,
}

#[derive(Args)]
struct ValidateGraphArgs {
    /// complete:N, directed-ring:N[:LAMBDA], undirected-ring:N, star:N,
    /// path:N, ring5, or a topology file path
    #[arg(long)]
    topology: Option<String>,
    /// key=value defaults; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// example1, placement, or a problem file path
    #[arg(long)]
    problem: Option<String>,
    /// Mixing topology (same forms as validate-graph)
    #[arg(long)]
    topology: Option<String>,
    /// Step size, or `auto` for 0.9 times the certified bound
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Iteration budget
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop once the stacked update norm falls below this
    #[arg(long)]
    tolerance: Option<f64>,
    /// Seed for the random initial decision variables
    #[arg(long)]
    seed: Option<u64>,
    /// Lower corner of the random initialization box
    #[arg(long, allow_negative_numbers = true)]
    init_lo: Option<f64>,
    /// Upper corner of the random initialization box
    #[arg(long, allow_negative_numbers = true)]
    init_hi: Option<f64>,
    /// Explicit stacked initial point, space-separated
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Write the per-iteration trace CSV here
    #[arg(long)]
    trace: Option<String>,
    /// Solve the problem centrally first and report distance to that optimum
    #[arg(long)]
    oracle: bool,
    /// Record states and report worst-case tracker conservation drift
    #[arg(long)]
    audit: bool,
    /// key=value defaults; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RateReportArgs {
    /// example1, placement, or a problem file path
    #[arg(long)]
    problem: Option<String>,
    /// Mixing topology (same forms as validate-graph)
    #[arg(long)]
    topology: Option<String>,
    /// Comma-separated step sizes to sweep
    #[arg(long, allow_hyphen_values = true)]
    alphas: Option<String>,
    /// Number of evenly spaced step sizes inside the certified interval
    #[arg(long)]
    grid: Option<usize>,
    /// Iteration budget per step size
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for the random initial decision variables
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV table here as well as to stdout
    #[arg(long)]
    report: Option<String>,
    /// key=value defaults; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ValidateGraph(args) => commands::validate_graph(args),
        Command::Run(args) => commands::run(args),
        Command::RateReport(args) => commands::rate_report(args),
        Command::Example1 => commands::example1(),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
