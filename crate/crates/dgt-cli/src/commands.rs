//! The four subcommands: graph validation, tracking runs, step-size
//! sweeps, and the two-agent benchmark contrast.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dgt_core::diagnostics::{build_m, fit_linear_rate, spectral_radius, tracking_audit, RateReport};
use dgt_core::engine::{max_stepsize, run as run_engine, EngineError, InitMode, RunConfig};
use dgt_core::graph::{
    build_weights, parse_topology, spectral_gap, validate, GraphError, TopologySpec, WeightMatrix,
};
use dgt_core::model::{
    builtin_example1, builtin_placement, effective_constants, parse_quadratic_problem, Constants,
    ProblemSpec, SampleBox,
};
use dgt_core::nalgebra::DVector;
use dgt_core::oracle::{centralized_solve, nash_solve_example1};

use crate::config::{failed, usage, CliError, FileConfig};
use crate::{RateReportArgs, RunArgs, ValidateGraphArgs};

/// Sampling box for constant estimation when a problem carries no
/// analytic constants.
const ESTIMATE_BOX: SampleBox = SampleBox { lo: -2.0, hi: 2.0 };
const ESTIMATE_SAMPLES: usize = 200;
const ESTIMATE_SEED: u64 = 0;

const TOPOLOGY_HELP: &str =
    "expected complete:N, directed-ring:N[:LAMBDA], undirected-ring:N, star:N, path:N, \
     ring5, or a readable topology file";

/// Flag value if given, else the config-file entry under `key`.
fn merged<T: FromStr>(flag: Option<T>, file: &FileConfig, key: &str) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.parse(key),
    }
}

fn merged_text(flag: Option<String>, file: &FileConfig, key: &str) -> Option<String> {
    flag.or_else(|| file.get(key).map(str::to_string))
}

/// Maps a topology argument to a spec: a named family with inline size,
/// the `ring5` benchmark alias (the undirected 5-agent ring, whose
/// Metropolis weights keep the placement benchmark stable at its
/// customary step size), or a file path.
fn resolve_topology(text: &str) -> Result<TopologySpec, CliError> {
    let text = text.trim();
    if text == "ring5" {
        return Ok(TopologySpec::undirected_ring(5));
    }
    let mut parts = text.split(':');
    let head = parts.next().unwrap_or("");
    if matches!(head, "complete" | "directed-ring" | "undirected-ring" | "star" | "path") {
        let n: usize = parts
            .next()
            .ok_or_else(|| usage(format!("topology {head} needs a size, like {head}:5")))?
            .parse()
            .map_err(|_| usage(format!("topology {text:?}: size must be an integer")))?;
        let third = parts.next();
        if parts.next().is_some() {
            return Err(usage(format!("topology {text:?} has too many fields; {TOPOLOGY_HELP}")));
        }
        if third.is_some() && head != "directed-ring" {
            return Err(usage(format!("topology {head} takes no parameter after the size")));
        }
        return Ok(match head {
            "complete" => TopologySpec::complete(n),
            "directed-ring" => {
                let lambda = match third {
                    Some(raw) => raw.parse().map_err(|_| {
                        usage(format!("topology {text:?}: neighbor weight must be a number"))
                    })?,
                    None => 0.5,
                };
                TopologySpec::directed_ring(n, lambda)
            }
            "undirected-ring" => TopologySpec::undirected_ring(n),
            "star" => TopologySpec::star(n),
            _ => TopologySpec::path(n),
        });
    }
    if Path::new(text).exists() {
        let content = fs::read_to_string(text)
            .map_err(|e| usage(format!("cannot read topology file {text}: {e}")))?;
        return parse_topology(&content).map_err(|e| usage(format!("topology file {text}: {e}")));
    }
    Err(usage(format!("unknown topology {text:?}; {TOPOLOGY_HELP}")))
}

/// Builds the weight matrix, splitting failures by kind: structural
/// violations are computation failures (exit 1), malformed requests are
/// usage errors (exit 2).
fn build_validated(spec: &TopologySpec) -> Result<WeightMatrix, CliError> {
    match build_weights(spec) {
        Ok(w) => Ok(w),
        Err(GraphError::Invalid(report)) => Err(failed(format!("topology rejected: {report}"))),
        Err(e) => Err(usage(format!("topology: {e}"))),
    }
}

fn resolve_problem(text: &str) -> Result<ProblemSpec, CliError> {
    match text {
        "example1" => Ok(builtin_example1()),
        "placement" => Ok(builtin_placement()),
        path if Path::new(path).exists() => {
            let content = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read problem file {path}: {e}")))?;
            parse_quadratic_problem(&content).map_err(|e| usage(format!("problem file {path}: {e}")))
        }
        other => Err(usage(format!(
            "unknown problem {other:?}; expected example1, placement, or a readable problem file"
        ))),
    }
}

/// Constants for step-size selection: attached analytic ones take
/// precedence, otherwise Monte-Carlo estimates over a fixed box.
fn resolve_constants(p: &ProblemSpec) -> Result<Constants, CliError> {
    effective_constants(p, ESTIMATE_BOX, ESTIMATE_SAMPLES, ESTIMATE_SEED)
        .map_err(|e| usage(format!("cannot determine problem constants: {e}")))
}

/// A positive number, or `auto` for nine tenths of the certified bound
/// `min(1/L1, alpha_s)`: safely inside the guaranteed region while close
/// to its edge.
fn resolve_alpha(text: &str, p: &ProblemSpec, rho: f64) -> Result<f64, CliError> {
    if text.trim() == "auto" {
        let c = resolve_constants(p)?;
        let bound =
            max_stepsize(&c, rho).map_err(|e| failed(format!("no usable step-size bound: {e}")))?;
        return Ok(0.9 * bound.alpha_bound);
    }
    check_positive_alpha(
        text.trim()
            .parse()
            .map_err(|_| usage(format!("alpha must be a number or `auto`, got {text:?}")))?,
    )
}

fn check_positive_alpha(v: f64) -> Result<f64, CliError> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(usage(format!(
            "step sizes must be positive and finite (the certified interval is open at 0), got {v}"
        )));
    }
    Ok(v)
}

/// Setup problems exit as usage errors; divergence and evaluation
/// breakdowns are computation failures.
fn map_engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::InvalidConfig(_)
        | EngineError::AgentCountMismatch { .. }
        | EngineError::RhoOutOfRange(_) => usage(e.to_string()),
        other => failed(other.to_string()),
    }
}

pub fn validate_graph(args: ValidateGraphArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref(), &["topology"])?;
    let topology = merged_text(args.topology, &file, "topology")
        .ok_or_else(|| usage("missing --topology"))?;
    let spec = resolve_topology(&topology)?;
    match build_weights(&spec) {
        Ok(w) => {
            println!("agents        {}", w.n_agents());
            println!("{}", validate(w.entries()));
            println!("spectral_gap  {}", spectral_gap(&w));
            Ok(())
        }
        Err(GraphError::Invalid(report)) => {
            println!("{report}");
            Err(failed("topology is not a valid mixing matrix"))
        }
        Err(e) => Err(usage(format!("topology: {e}"))),
    }
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let file = FileConfig::load(
        args.config.as_deref(),
        &[
            "problem", "topology", "alpha", "max-iters", "tolerance", "seed", "init-lo",
            "init-hi", "x0", "trace", "oracle", "audit",
        ],
    )?;

    // Pure argument validation runs before anything is computed.
    let alpha_text = merged_text(args.alpha, &file, "alpha")
        .ok_or_else(|| usage("missing --alpha (a number, or `auto`)"))?;
    if alpha_text.trim() != "auto" {
        check_positive_alpha(alpha_text.trim().parse().map_err(|_| {
            usage(format!("alpha must be a number or `auto`, got {alpha_text:?}"))
        })?)?;
    }
    let problem_text =
        merged_text(args.problem, &file, "problem").ok_or_else(|| usage("missing --problem"))?;
    let topology_text =
        merged_text(args.topology, &file, "topology").ok_or_else(|| usage("missing --topology"))?;
    let x0_text = merged_text(args.x0, &file, "x0");
    let init_lo = merged(args.init_lo, &file, "init-lo")?;
    let init_hi = merged(args.init_hi, &file, "init-hi")?;
    if x0_text.is_some() && (init_lo.is_some() || init_hi.is_some()) {
        return Err(usage("choose either --x0 or the --init-lo/--init-hi box, not both"));
    }
    let max_iters = merged(args.max_iters, &file, "max-iters")?;
    let tolerance = merged(args.tolerance, &file, "tolerance")?;
    let seed = merged(args.seed, &file, "seed")?;
    let trace_path = merged_text(args.trace, &file, "trace").map(PathBuf::from);
    let oracle = args.oracle || file.flag("oracle")?;
    let audit = args.audit || file.flag("audit")?;

    let p = resolve_problem(&problem_text)?;
    let w = build_validated(&resolve_topology(&topology_text)?)?;
    if w.n_agents() != p.n_agents() {
        return Err(usage(format!(
            "problem has {} agents but the topology has {}",
            p.n_agents(),
            w.n_agents()
        )));
    }
    let rho = spectral_gap(&w);
    let alpha = resolve_alpha(&alpha_text, &p, rho)?;

    let mut cfg = RunConfig::new(alpha);
    if let Some(v) = max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = tolerance {
        cfg.x_tolerance = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(text) = x0_text {
        let coords: Result<Vec<f64>, _> = text.split_whitespace().map(str::parse).collect();
        let coords =
            coords.map_err(|_| usage(format!("x0 must be space-separated numbers, got {text:?}")))?;
        cfg.init_mode = InitMode::Explicit(DVector::from_vec(coords));
    } else if init_lo.is_some() || init_hi.is_some() {
        cfg.init_mode = InitMode::RandomBox {
            lo: init_lo.unwrap_or(-1.0),
            hi: init_hi.unwrap_or(1.0),
        };
    }
    cfg.record_states = audit;

    let sol = if oracle {
        let s = centralized_solve(&p).map_err(|e| failed(format!("reference solve failed: {e}")))?;
        cfg.x_star = Some(s.x_star.clone());
        Some(s)
    } else {
        None
    };

    let trace = run_engine(&p, &w, &cfg).map_err(map_engine_error)?;

    if let Some(path) = &trace_path {
        fs::write(path, trace.to_csv())
            .map_err(|e| failed(format!("cannot write trace {}: {e}", path.display())))?;
    }

    println!("problem       {}", p.name());
    println!("agents        {}", p.n_agents());
    println!("spectral_gap  {rho}");
    println!("alpha         {alpha}");
    println!("seed          {}", cfg.seed);
    println!("iterations    {}", trace.iterations());
    println!("converged     {}", trace.converged());
    let last = trace.rows().last().expect("a run always records rows");
    println!("step_norm     {}", last.step_norm);
    if let Some(err) = last.err_x {
        println!("err_x         {err}");
    }
    println!("cons_sigma    {}", last.cons_sigma);
    println!("cons_y        {}", last.cons_y);
    println!("objective     {}", last.objective);
    if let Some(s) = &sol {
        let terminal = trace.terminal_state();
        let worst = (0..terminal.n_agents())
            .map(|i| (terminal.sigma(i) - &s.sigma_star).norm())
            .fold(0.0, f64::max);
        println!("sigma_gap     {worst}");
        match fit_linear_rate(trace.rows(), None) {
            Ok(fit) => {
                println!("empirical_q   {}", fit.empirical_q);
                println!("fit_r2        {}", fit.fit_r2);
            }
            Err(e) => println!("empirical_q   n/a ({e})"),
        }
    }
    if audit {
        let a = tracking_audit(&trace, &p).map_err(|e| failed(format!("audit failed: {e}")))?;
        println!("audit_sigma   {}", a.max_sigma_dev);
        println!("audit_y       {}", a.max_y_dev);
    }
    if let Some(path) = &trace_path {
        println!("trace         {}", path.display());
    }

    if !trace.converged() {
        return Err(failed(format!("did not converge within {} iterations", trace.iterations())));
    }
    Ok(())
}

pub fn rate_report(args: RateReportArgs) -> Result<(), CliError> {
    let file = FileConfig::load(
        args.config.as_deref(),
        &["problem", "topology", "alphas", "grid", "max-iters", "seed", "report"],
    )?;
    let problem_text =
        merged_text(args.problem, &file, "problem").ok_or_else(|| usage("missing --problem"))?;
    let topology_text =
        merged_text(args.topology, &file, "topology").ok_or_else(|| usage("missing --topology"))?;
    let alphas_text = merged_text(args.alphas, &file, "alphas");
    let grid = merged(args.grid, &file, "grid")?;
    if alphas_text.is_some() && grid.is_some() {
        return Err(usage("choose either --alphas or --grid, not both"));
    }
    let max_iters = merged(args.max_iters, &file, "max-iters")?;
    let seed = merged(args.seed, &file, "seed")?;
    let report_path = merged_text(args.report, &file, "report").map(PathBuf::from);

    let p = resolve_problem(&problem_text)?;
    let w = build_validated(&resolve_topology(&topology_text)?)?;
    if w.n_agents() != p.n_agents() {
        return Err(usage(format!(
            "problem has {} agents but the topology has {}",
            p.n_agents(),
            w.n_agents()
        )));
    }
    let rho = spectral_gap(&w);
    let c = resolve_constants(&p)?;
    let bound =
        max_stepsize(&c, rho).map_err(|e| failed(format!("no usable step-size bound: {e}")))?;

    let alphas: Vec<f64> = match alphas_text {
        Some(text) => {
            let parsed: Result<Vec<f64>, CliError> = text
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| usage(format!("alphas: cannot parse {t:?}")))
                        .and_then(check_positive_alpha)
                })
                .collect();
            parsed?
        }
        None => {
            let n = grid.unwrap_or(5);
            if n == 0 {
                return Err(usage("grid must have at least one point"));
            }
            (1..=n).map(|i| bound.alpha_s * i as f64 / (n + 1) as f64).collect()
        }
    };

    let sol = centralized_solve(&p).map_err(|e| failed(format!("reference solve failed: {e}")))?;

    let mut lines = vec![RateReport::CSV_HEADER.to_string()];
    println!("{}", RateReport::CSV_HEADER);
    for alpha in alphas {
        let mut cfg = RunConfig::new(alpha);
        cfg.x_star = Some(sol.x_star.clone());
        if let Some(v) = max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        let line = match run_engine(&p, &w, &cfg) {
            Ok(trace) => match RateReport::assemble(&c, rho, alpha, &trace) {
                Ok(report) => report.csv_row(),
                Err(e) => {
                    eprintln!("note: alpha {alpha}: {e}");
                    degraded_row(alpha, &c, rho, bound.alpha_s)
                }
            },
            Err(e) => {
                eprintln!("note: alpha {alpha}: {e}");
                degraded_row(alpha, &c, rho, bound.alpha_s)
            }
        };
        println!("{line}");
        lines.push(line);
    }

    if let Some(path) = report_path {
        let mut text = lines.join("\n");
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| failed(format!("cannot write report {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Row for a step size whose run or fit produced nothing usable: the
/// prediction columns still carry information, the empirical ones are NaN.
fn degraded_row(alpha: f64, c: &Constants, rho: f64, alpha_s: f64) -> String {
    let rho_m = build_m(alpha, c, rho).map(|m| spectral_radius(&m)).unwrap_or(f64::NAN);
    format!("{alpha},{alpha_s},{rho_m},NaN,NaN")
}

pub fn example1() -> Result<(), CliError> {
    let p = builtin_example1();
    let w = build_weights(&TopologySpec::complete(2)).expect("static topology");
    let mut cfg = RunConfig::new(0.1);
    cfg.max_iters = 20_000;
    cfg.x_tolerance = 1e-12;
    let trace = run_engine(&p, &w, &cfg).map_err(map_engine_error)?;
    let x = trace.terminal_state().stacked_x();
    let f_coop = p.global_objective(&x).map_err(|e| failed(e.to_string()))?;
    let nash = nash_solve_example1();
    let f_nash = p.global_objective(&nash).map_err(|e| failed(e.to_string()))?;

    println!("cooperative optimum   x = ({}, {})   f = {f_coop}", x[0], x[1]);
    println!("selfish stationary    x = ({}, {})   f = {f_nash}", nash[0], nash[1]);
    println!("objective gap         f_selfish - f_optimum = {}", f_nash - f_coop);

    if !trace.converged() {
        return Err(failed("benchmark run did not converge"));
    }
    Ok(())
}
