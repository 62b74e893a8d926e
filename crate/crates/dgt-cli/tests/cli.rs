//! End-to-end checks of the binary: exit codes, output shapes, and the
//! flag/config-file precedence rules.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn dgt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgt")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Scratch file that cleans up after itself.
struct ScratchFile(PathBuf);

impl ScratchFile {
    fn new(name: &str) -> Self {
        let path = std::env::temp_dir().join(format!("dgt-cli-test-{}-{name}", std::process::id()));
        Self(path)
    }

    fn path_str(&self) -> &str {
        self.0.to_str().expect("utf-8 temp path")
    }
}

impl Drop for ScratchFile {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[test]
fn validate_graph_reports_complete_topology() {
    let out = dgt(&["validate-graph", "--topology", "complete:5"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("agents        5"), "{text}");
    assert!(text.contains("row_stochastic=true column_stochastic=true strongly_connected=true"));
    // Complete mixing collapses disagreement in one round: gap exactly 0.
    assert!(text.contains("spectral_gap  0"), "{text}");
}

#[test]
fn validate_graph_reports_directed_ring_gap() {
    let out = dgt(&["validate-graph", "--topology", "directed-ring:5:0.5"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("spectral_gap  0.809"), "{}", stdout(&out));
}

#[test]
fn validate_graph_rejects_disconnected_matrix_with_failure_exit() {
    let file = ScratchFile::new("identity.txt");
    fs::write(&file.0, "1 0\n0 1\n").unwrap();
    let out = dgt(&["validate-graph", "--topology", file.path_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("strongly_connected=false"));
    assert!(stderr(&out).contains("not a valid mixing matrix"));
}

#[test]
fn validate_graph_without_topology_is_a_usage_error() {
    let out = dgt(&["validate-graph"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing --topology"));
}

#[test]
fn unknown_topology_is_a_usage_error() {
    let out = dgt(&["validate-graph", "--topology", "moebius:5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown topology"));
}

#[test]
fn run_with_negative_alpha_exits_before_any_computation() {
    let out = dgt(&["run", "--problem", "example1", "--topology", "complete:2", "--alpha", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("positive"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty(), "no partial output expected: {}", stdout(&out));
}

#[test]
fn run_with_auto_alpha_converges_and_writes_a_trace() {
    let trace = ScratchFile::new("auto-trace.csv");
    let out = dgt(&[
        "run",
        "--problem",
        "example1",
        "--topology",
        "complete:2",
        "--alpha",
        "auto",
        "--oracle",
        "--trace",
        trace.path_str(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("converged     true"), "{text}");
    assert!(text.contains("err_x"), "{text}");
    let csv = fs::read_to_string(&trace.0).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,err_x,cons_sigma,cons_y,step_norm,objective"));
    assert!(lines.next().unwrap().starts_with("0,"));
}

#[test]
fn run_mismatched_agent_count_is_a_usage_error() {
    let out = dgt(&["run", "--problem", "example1", "--topology", "complete:3", "--alpha", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("2 agents"), "{}", stderr(&out));
}

#[test]
fn run_that_hits_the_iteration_budget_exits_with_failure() {
    let out = dgt(&[
        "run",
        "--problem",
        "example1",
        "--topology",
        "complete:2",
        "--alpha",
        "0.001",
        "--max-iters",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("converged     false"));
    assert!(stderr(&out).contains("did not converge within 5 iterations"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let cfg = ScratchFile::new("run.cfg");
    fs::write(
        &cfg.0,
        "# benchmark defaults\nproblem = example1\ntopology = complete:2\nalpha = 0.1\nseed = 3\n",
    )
    .unwrap();
    // File alone drives a full run.
    let out = dgt(&["run", "--config", cfg.path_str()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("seed          3"));
    // An explicit flag beats the file entry.
    let out = dgt(&["run", "--config", cfg.path_str(), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("seed          9"));
}

#[test]
fn config_file_with_unknown_key_is_a_usage_error() {
    let cfg = ScratchFile::new("bad.cfg");
    fs::write(&cfg.0, "problem = example1\nstepsize = 0.1\n").unwrap();
    let out = dgt(&["run", "--config", cfg.path_str()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("stepsize"), "{}", stderr(&out));
}

#[test]
fn rate_report_rejects_zero_alpha_as_usage_error() {
    let out = dgt(&[
        "rate-report",
        "--problem",
        "example1",
        "--topology",
        "complete:2",
        "--alphas",
        "0.01,0,0.02",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("open at 0"), "{}", stderr(&out));
}

#[test]
fn rate_report_grid_prints_header_and_one_row_per_alpha() {
    let report = ScratchFile::new("rates.csv");
    let out = dgt(&[
        "rate-report",
        "--problem",
        "example1",
        "--topology",
        "complete:2",
        "--grid",
        "3",
        "--report",
        report.path_str(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "alpha,alpha_s,rho_M,empirical_q,fit_r2");
    assert_eq!(lines.len(), 4, "{text}");
    assert_eq!(fs::read_to_string(&report.0).unwrap().trim(), text.trim());
}

#[test]
fn example1_contrasts_optimum_against_selfish_point() {
    let out = dgt(&["example1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("cooperative optimum"), "{text}");
    assert!(text.contains("selfish stationary"), "{text}");
    assert!(text.contains("x = (0.5, 1.5)"), "{text}");
    // The selfish point costs strictly more.
    assert!(text.contains("f_selfish - f_optimum = 0.25"), "{text}");
}

#[test]
fn help_and_version_exit_cleanly() {
    let out = dgt(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("validate-graph"));
    let out = dgt(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_subcommand_usage_exits_2() {
    let out = dgt(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}
