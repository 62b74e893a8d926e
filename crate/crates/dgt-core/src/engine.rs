//! The synchronous tracking iteration.
//!
//! Every agent carries three pieces of state: its decision block `x_i`, an
//! aggregate tracker `sigma_i` estimating the network-wide aggregate, and a
//! gradient tracker `y_i` estimating the mean of the partial gradients in
//! the aggregate argument. One round updates them in strict order, each
//! sub-step reading only the previous round's neighbor values:
//!
//! ```text
//!     x_i'     = x_i - alpha * (grad_x f_i(x_i, sigma_i) + grad_phi_i(x_i) * y_i)
//!     sigma_i' = sum_j a_ij sigma_j + phi_i(x_i') - phi_i(x_i)
//!     y_i'     = sum_j a_ij y_j + grad_sigma f_i(x_i', sigma_i')
//!                                - grad_sigma f_i(x_i, sigma_i)
//! ```
//!
//! Double stochasticity of the weights makes both tracker means conserved:
//! the mean of `sigma_i` equals the mean of `phi_i(x_i)` at every round, and
//! the mean of `y_i` equals the mean of `grad_sigma f_i(x_i, sigma_i)`,
//! exactly as set by [`init`]. Those two identities are the backbone of the
//! convergence argument and are audited in the diagnostics module.
//!
//! Floating-point reduction orders are fixed (agent-ascending stacking,
//! neighbor mixing in ascending `j`), so runs are bitwise reproducible and
//! the optional `parallel` feature (agent-level parallelism only) returns
//! bitwise-identical results.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{ComplexField, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::graph::WeightMatrix;
use crate::model::{Constants, ModelError, ProblemSpec};

/// Iterates whose stacked norm exceeds this are diagnosed as divergent even
/// before any component overflows to infinity.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Errors from configuration, evaluation, and divergence detection.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("problem has {problem} agents but the weight matrix has {graph}")]
    AgentCountMismatch { problem: usize, graph: usize },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("iterate of agent {agent} became non-finite at iteration {iteration}; the step size is likely too large")]
    NonFinite { iteration: usize, agent: usize },
    #[error("iterate norm {norm:e} exceeded {DIVERGENCE_NORM:e} at iteration {iteration}; reduce the step size")]
    Exploded { iteration: usize, norm: f64 },
    #[error("spectral gap must lie in [0, 1), got {0}")]
    RhoOutOfRange(f64),
}

/// Per-agent triples `(x_i, sigma_i, y_i)` at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    k: usize,
    x: Vec<DVector<f64>>,
    sigma: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
}

impl SwarmState {
    /// Assembles a state from raw parts. The three lists must have one
    /// entry per agent and congruent tracker dimensions.
    pub fn from_parts(
        k: usize,
        x: Vec<DVector<f64>>,
        sigma: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
    ) -> Result<Self, EngineError> {
        if x.is_empty() || x.len() != sigma.len() || x.len() != y.len() {
            return Err(EngineError::InvalidConfig(alloc::format!(
                "state lists must be nonempty and congruent: {} / {} / {}",
                x.len(),
                sigma.len(),
                y.len()
            )));
        }
        let d = sigma[0].len();
        if sigma.iter().any(|s| s.len() != d) || y.iter().any(|v| v.len() != d) {
            return Err(EngineError::InvalidConfig("tracker dimensions differ across agents".into()));
        }
        Ok(Self { k, x, sigma, y })
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn n_agents(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self, i: usize) -> &DVector<f64> {
        &self.x[i]
    }

    pub fn sigma(&self, i: usize) -> &DVector<f64> {
        &self.sigma[i]
    }

    pub fn y(&self, i: usize) -> &DVector<f64> {
        &self.y[i]
    }

    /// Stacks the decision blocks in agent order.
    pub fn stacked_x(&self) -> DVector<f64> {
        stack(&self.x)
    }

    /// Euclidean size of the disagreement `sigma_i` minus the tracker mean.
    pub fn sigma_consensus_residual(&self) -> f64 {
        consensus_residual(&self.sigma)
    }

    /// Euclidean size of the disagreement `y_i` minus the tracker mean.
    pub fn y_consensus_residual(&self) -> f64 {
        consensus_residual(&self.y)
    }
}

fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let total: usize = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(total);
    let mut offset = 0;
    for b in blocks {
        for r in 0..b.len() {
            out[offset + r] = b[r];
        }
        offset += b.len();
    }
    out
}

fn mean_of(vectors: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(vectors[0].len());
    for v in vectors {
        acc += v;
    }
    acc / vectors.len() as f64
}

fn consensus_residual(vectors: &[DVector<f64>]) -> f64 {
    let mean = mean_of(vectors);
    let sq: f64 = vectors.iter().map(|v| (v - &mean).norm_squared()).sum();
    ComplexField::sqrt(sq)
}

/// How the initial decision vector is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Every coordinate drawn uniformly from `[lo, hi)` with the seeded
    /// generator; the starting point is otherwise arbitrary.
    RandomBox { lo: f64, hi: f64 },
    /// Caller-supplied stacked starting point.
    Explicit(DVector<f64>),
}

/// Step size, stopping rules, and initialization for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once the stacked decision moves less than this between rounds.
    pub x_tolerance: f64,
    pub seed: u64,
    pub init_mode: InitMode,
    /// Known optimum, if any; populates the `err_x` trace column.
    pub x_star: Option<DVector<f64>>,
    /// Keep a full copy of every visited state (for tracker audits).
    pub record_states: bool,
}

impl RunConfig {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            max_iters: 10_000,
            x_tolerance: 1e-10,
            seed: 0,
            init_mode: InitMode::RandomBox { lo: -1.0, hi: 1.0 },
            x_star: None,
            record_states: false,
        }
    }

    fn check(&self, p: &ProblemSpec) -> Result<(), EngineError> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(EngineError::InvalidConfig(alloc::format!("alpha = {} must be positive", self.alpha)));
        }
        if self.max_iters == 0 {
            return Err(EngineError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.x_tolerance > 0.0) {
            return Err(EngineError::InvalidConfig(alloc::format!(
                "x_tolerance = {} must be positive",
                self.x_tolerance
            )));
        }
        match &self.init_mode {
            InitMode::RandomBox { lo, hi } if !(hi > lo) => {
                return Err(EngineError::InvalidConfig(alloc::format!("empty init box [{lo}, {hi})")));
            }
            InitMode::Explicit(x0) if x0.len() != p.total_dim() => {
                return Err(EngineError::InvalidConfig(alloc::format!(
                    "explicit x0 has dimension {}, problem needs {}",
                    x0.len(),
                    p.total_dim()
                )));
            }
            _ => {}
        }
        if let Some(xs) = &self.x_star {
            if xs.len() != p.total_dim() {
                return Err(EngineError::InvalidConfig(alloc::format!(
                    "x_star has dimension {}, problem needs {}",
                    xs.len(),
                    p.total_dim()
                )));
            }
        }
        Ok(())
    }
}

/// One per-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    /// `||x_k - x*||` when an optimum was supplied.
    pub err_x: Option<f64>,
    /// Disagreement of the aggregate trackers.
    pub cons_sigma: f64,
    /// Disagreement of the gradient trackers.
    pub cons_y: f64,
    /// `||x_k - x_{k-1}||`; zero on the initial row.
    pub step_norm: f64,
    /// Global objective at the stacked decision.
    pub objective: f64,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The decision moved less than the tolerance at the given iteration.
    Converged { at: usize },
    /// The iteration budget ran out first.
    MaxIters,
}

/// Full run history plus the terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    rows: Vec<TraceRow>,
    stop: StopReason,
    terminal: SwarmState,
    states: Option<Vec<SwarmState>>,
}

impl Trace {
    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop
    }

    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::Converged { .. })
    }

    /// Iterations actually performed (rows minus the initial record).
    pub fn iterations(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn terminal_state(&self) -> &SwarmState {
        &self.terminal
    }

    /// Every visited state, present when the run recorded them.
    pub fn states(&self) -> Option<&[SwarmState]> {
        self.states.as_deref()
    }

    /// Header matching [`Trace::to_csv`].
    pub const CSV_HEADER: &'static str = "k,err_x,cons_sigma,cons_y,step_norm,objective";

    /// Serializes the rows as CSV, one row per iteration. Floats use the
    /// shortest decimal form that parses back to the same bits, so equal
    /// traces serialize to byte-equal text. Without a reference optimum the
    /// `err_x` field is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            match r.err_x {
                Some(e) => out.push_str(&alloc::format!("{},{}", r.k, e)),
                None => out.push_str(&alloc::format!("{},", r.k)),
            }
            out.push_str(&alloc::format!(
                ",{},{},{},{}\n",
                r.cons_sigma,
                r.cons_y,
                r.step_norm,
                r.objective
            ));
        }
        out
    }
}

/// Sets up iteration zero: trackers start at the agent's own contribution,
/// `sigma_i = phi_i(x_i)` and `y_i = grad_sigma f_i(x_i, sigma_i)`, which
/// plants both conservation identities exactly.
pub fn init(p: &ProblemSpec, x0: &DVector<f64>) -> Result<SwarmState, EngineError> {
    let blocks = p.blocks(x0)?;
    let mut sigma = Vec::with_capacity(blocks.len());
    let mut y = Vec::with_capacity(blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        let s = p.agent(i).phi(b);
        y.push(p.agent(i).grad_sigma(b, &s));
        sigma.push(s);
    }
    Ok(SwarmState { k: 0, x: blocks, sigma, y })
}

/// Advances one synchronous round.
///
/// Sub-steps run in the fixed order decision, aggregate tracker, gradient
/// tracker; neighbor reads (`sum_j a_ij ...`) always use the previous
/// round's buffers and sum in ascending `j`. Agent `i`'s evaluators are
/// called with agent `i`'s data only. Non-finite results or an iterate norm
/// beyond [`DIVERGENCE_NORM`] abort with a divergence diagnosis naming the
/// iteration and agent.
pub fn step(
    s: &SwarmState,
    w: &WeightMatrix,
    p: &ProblemSpec,
    alpha: f64,
) -> Result<SwarmState, EngineError> {
    if p.n_agents() != w.n_agents() {
        return Err(EngineError::AgentCountMismatch { problem: p.n_agents(), graph: w.n_agents() });
    }
    if s.n_agents() != p.n_agents() {
        return Err(EngineError::AgentCountMismatch { problem: p.n_agents(), graph: s.n_agents() });
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(EngineError::InvalidConfig(alloc::format!("alpha = {alpha} must be positive")));
    }

    #[cfg(feature = "parallel")]
    let updated: Vec<AgentUpdate> = (0..s.n_agents())
        .into_par_iter()
        .map(|i| update_agent(i, s, w, p, alpha))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let updated: Vec<AgentUpdate> = (0..s.n_agents()).map(|i| update_agent(i, s, w, p, alpha)).collect();

    let mut x = Vec::with_capacity(updated.len());
    let mut sigma = Vec::with_capacity(updated.len());
    let mut y = Vec::with_capacity(updated.len());
    for u in updated {
        x.push(u.x);
        sigma.push(u.sigma);
        y.push(u.y);
    }
    let next = SwarmState { k: s.k + 1, x, sigma, y };
    diagnose_divergence(&next)?;
    Ok(next)
}

struct AgentUpdate {
    x: DVector<f64>,
    sigma: DVector<f64>,
    y: DVector<f64>,
}

fn update_agent(i: usize, s: &SwarmState, w: &WeightMatrix, p: &ProblemSpec, alpha: f64) -> AgentUpdate {
    let agent = p.agent(i);
    let x_old = &s.x[i];
    let sigma_old = &s.sigma[i];
    // Decision first: descend along the tracker-corrected local gradient.
    let descent = agent.grad_x(x_old, sigma_old) + agent.grad_phi(x_old) * &s.y[i];
    let x_new = x_old - alpha * descent;
    // Aggregate tracker: mix neighbors, then add the own-contribution drift.
    let mut sigma_new = mix(w, &s.sigma, i);
    sigma_new += agent.phi(&x_new) - agent.phi(x_old);
    // Gradient tracker: mix neighbors, then add the own-gradient drift
    // evaluated at the fresh decision and fresh aggregate tracker.
    let mut y_new = mix(w, &s.y, i);
    y_new += agent.grad_sigma(&x_new, &sigma_new) - agent.grad_sigma(x_old, sigma_old);
    AgentUpdate { x: x_new, sigma: sigma_new, y: y_new }
}

/// `sum_j a_ij v_j` in ascending `j`, skipping absent edges.
fn mix(w: &WeightMatrix, values: &[DVector<f64>], i: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(values[0].len());
    for (j, v) in values.iter().enumerate() {
        let a = w.weight(i, j);
        if a != 0.0 {
            acc.axpy(a, v, 1.0);
        }
    }
    acc
}

fn diagnose_divergence(s: &SwarmState) -> Result<(), EngineError> {
    for i in 0..s.n_agents() {
        let finite = s.x[i].iter().all(|v| v.is_finite())
            && s.sigma[i].iter().all(|v| v.is_finite())
            && s.y[i].iter().all(|v| v.is_finite());
        if !finite {
            return Err(EngineError::NonFinite { iteration: s.k, agent: i });
        }
    }
    let norm = stack(&s.x).norm();
    if norm > DIVERGENCE_NORM {
        return Err(EngineError::Exploded { iteration: s.k, norm });
    }
    Ok(())
}

/// Runs the iteration until the decision settles or the budget runs out.
///
/// Deterministic given the config: the seed fixes the starting point and
/// every reduction order is fixed, so two identical calls produce
/// bitwise-identical traces.
pub fn run(p: &ProblemSpec, w: &WeightMatrix, cfg: &RunConfig) -> Result<Trace, EngineError> {
    cfg.check(p)?;
    if p.n_agents() != w.n_agents() {
        return Err(EngineError::AgentCountMismatch { problem: p.n_agents(), graph: w.n_agents() });
    }
    let x0 = match &cfg.init_mode {
        InitMode::RandomBox { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (lo, hi) = (*lo, *hi);
            DVector::from_fn(p.total_dim(), |_, _| rng.gen_range(lo..hi))
        }
        InitMode::Explicit(x0) => x0.clone(),
    };
    let mut state = init(p, &x0)?;
    let mut rows = Vec::new();
    let mut states = cfg.record_states.then(Vec::new);
    push_row(&mut rows, &state, 0.0, p, cfg)?;
    if let Some(list) = states.as_mut() {
        list.push(state.clone());
    }
    let mut stop = StopReason::MaxIters;
    for _ in 0..cfg.max_iters {
        let next = step(&state, w, p, cfg.alpha)?;
        let step_norm = ComplexField::sqrt(
            next.x.iter().zip(&state.x).map(|(a, b)| (a - b).norm_squared()).sum::<f64>(),
        );
        push_row(&mut rows, &next, step_norm, p, cfg)?;
        if let Some(list) = states.as_mut() {
            list.push(next.clone());
        }
        state = next;
        if step_norm < cfg.x_tolerance {
            stop = StopReason::Converged { at: state.k };
            break;
        }
    }
    Ok(Trace { rows, stop, terminal: state, states })
}

fn push_row(
    rows: &mut Vec<TraceRow>,
    state: &SwarmState,
    step_norm: f64,
    p: &ProblemSpec,
    cfg: &RunConfig,
) -> Result<(), EngineError> {
    let stacked = state.stacked_x();
    rows.push(TraceRow {
        k: state.k,
        err_x: cfg.x_star.as_ref().map(|xs| (&stacked - xs).norm()),
        cons_sigma: state.sigma_consensus_residual(),
        cons_y: state.y_consensus_residual(),
        step_norm,
        objective: p.global_objective(&stacked)?,
    });
    Ok(())
}

/// Theoretical step-size threshold and the accompanying usable bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeBound {
    /// Threshold where the contraction argument's matrix loses its margin.
    pub alpha_s: f64,
    /// The guaranteed-convergence bound `min(1 / l1, alpha_s)`.
    pub alpha_bound: f64,
    /// `mu + l1 + l2 * l3`.
    pub l_mu: f64,
    /// `l1 + l2 + l2 * l3`.
    pub l0: f64,
}

/// Evaluates the closed-form step-size threshold
///
/// ```text
///     alpha_s = mu (1 - rho)^2 / (l3 * l_mu * ((1 - rho) l0 + 2 l2 l3)),
///     l_mu = mu + l1 + l2 l3,    l0 = l1 + l2 + l2 l3,
/// ```
///
/// and the usable bound `min(1 / l1, alpha_s)`. `rho` is the spectral gap
/// of the communication matrix and must lie in `[0, 1)`.
pub fn max_stepsize(c: &Constants, rho: f64) -> Result<StepsizeBound, EngineError> {
    if !(0.0..1.0).contains(&rho) {
        return Err(EngineError::RhoOutOfRange(rho));
    }
    let l_mu = c.mu + c.l1 + c.l2 * c.l3;
    let l0 = c.l1 + c.l2 + c.l2 * c.l3;
    let one_minus = 1.0 - rho;
    let alpha_s = c.mu * one_minus * one_minus / (c.l3 * l_mu * (one_minus * l0 + 2.0 * c.l2 * c.l3));
    Ok(StepsizeBound { alpha_s, alpha_bound: (1.0 / c.l1).min(alpha_s), l_mu, l0 })
}
