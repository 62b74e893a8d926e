//! Problem definitions: per-agent objectives, aggregate maps, gradients,
//! and smoothness/convexity constants.
//!
//! A problem over `N` agents is
//!
//! ```text
//!     minimize  f(x) = sum_i f_i(x_i, sigma(x)),
//!     sigma(x) = (1/N) sum_i phi_i(x_i),
//! ```
//!
//! with `x_i` in `R^{n_i}` and `sigma(x)` in `R^d`. Each agent contributes
//! an objective `f_i` and an aggregate map `phi_i`, both private: the
//! information structure is enforced by keeping every evaluator per-agent,
//! so nothing in this crate can ask agent `i` about agent `j`'s variable.
//!
//! Gradients come in three pieces per agent: `grad_x` (partial in the own
//! block), `grad_sigma` (partial in the aggregate argument), and `grad_phi`
//! (the `n_i x d` Jacobian-transpose of `phi_i`, laid out so that
//! `grad_phi(x_i) * v` maps an aggregate-space vector `v` into the agent's
//! decision space). The chain rule gives the true gradient of `f` blockwise:
//!
//! ```text
//!     grad_i f(x) = grad_x f_i(x_i, sigma(x))
//!                 + grad_phi_i(x_i) * (1/N) sum_j grad_sigma f_j(x_j, sigma(x)).
//! ```

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Errors from problem construction, evaluation, and parsing.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("expected a vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("a problem needs at least one agent")]
    EmptyProblem,
    #[error("agents disagree on the aggregate dimension: {0} vs {1}")]
    AggDimMismatch(usize, usize),
    #[error("constants invalid: {0}")]
    InvalidConstants(String),
    #[error("sample box [{lo}, {hi}] has no volume")]
    DegenerateSampleBox { lo: f64, hi: f64 },
    #[error("problem text: {0}")]
    Parse(String),
}

/// Where a constant's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Exact, derived from the problem's algebraic structure.
    Analytic,
    /// Monte-Carlo estimate from sampled difference quotients.
    Estimated,
}

impl core::fmt::Display for Provenance {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Provenance::Analytic => write!(f, "analytic"),
            Provenance::Estimated => write!(f, "estimated"),
        }
    }
}

/// Per-field provenance tags for [`Constants`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenances {
    pub mu: Provenance,
    pub l1: Provenance,
    pub l2: Provenance,
    pub l3: Provenance,
}

impl Provenances {
    pub fn uniform(p: Provenance) -> Self {
        Self { mu: p, l1: p, l2: p, l3: p }
    }

    pub fn all_analytic(&self) -> bool {
        let a = Provenance::Analytic;
        self.mu == a && self.l1 == a && self.l2 == a && self.l3 == a
    }
}

/// Smoothness and convexity constants of a problem.
///
/// `mu` is the strong-convexity modulus of the global objective, `l1` its
/// gradient's Lipschitz constant (this single field also bounds the
/// composite map formed by `grad_x` plus the `grad_phi`-weighted mean of
/// `grad_sigma`), `l2` the joint Lipschitz constant of the stacked
/// `grad_sigma` map in `(x, sigma)`, and `l3` a bound on the operator norm
/// of every `grad_phi_i` anywhere it is sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mu: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub provenance: Provenances,
}

impl Constants {
    /// Validates positivity and `mu <= l1` (a strong-convexity modulus can
    /// never exceed the smoothness constant of the same function).
    pub fn new(mu: f64, l1: f64, l2: f64, l3: f64, provenance: Provenances) -> Result<Self, ModelError> {
        for (name, v) in [("mu", mu), ("l1", l1), ("l2", l2), ("l3", l3)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidConstants(alloc::format!("{name} = {v} must be positive and finite")));
            }
        }
        if mu > l1 {
            return Err(ModelError::InvalidConstants(alloc::format!("mu = {mu} exceeds l1 = {l1}")));
        }
        Ok(Self { mu, l1, l2, l3, provenance })
    }

    pub fn analytic(mu: f64, l1: f64, l2: f64, l3: f64) -> Result<Self, ModelError> {
        Self::new(mu, l1, l2, l3, Provenances::uniform(Provenance::Analytic))
    }
}

/// One agent's private objective and aggregate contribution.
///
/// Implementations must be deterministic (same inputs produce bitwise-same
/// outputs) and stateless; the engine may evaluate different agents
/// concurrently. Gradient methods have central-difference defaults so a
/// problem can be defined by values alone; such problems should leave
/// [`AgentObjective::analytic_gradients`] at `false` so callers can warn
/// about the reduced accuracy.
pub trait AgentObjective: Send + Sync {
    /// Dimension `n_i` of this agent's decision block.
    fn local_dim(&self) -> usize;

    /// Dimension `d` of the aggregate space (shared by all agents).
    fn agg_dim(&self) -> usize;

    /// Aggregate contribution `phi_i(x_i)` in `R^d`.
    fn phi(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Objective value `f_i(x_i, sigma)`.
    fn value(&self, x: &DVector<f64>, sigma: &DVector<f64>) -> f64;

    /// Partial gradient of `f_i` in the decision block, in `R^{n_i}`.
    fn grad_x(&self, x: &DVector<f64>, sigma: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.local_dim());
        let mut xp = x.clone();
        for r in 0..self.local_dim() {
            let h = fd_step(x[r]);
            xp[r] = x[r] + h;
            let plus = self.value(&xp, sigma);
            xp[r] = x[r] - h;
            let minus = self.value(&xp, sigma);
            xp[r] = x[r];
            g[r] = (plus - minus) / (2.0 * h);
        }
        g
    }

    /// Partial gradient of `f_i` in the aggregate argument, in `R^d`.
    fn grad_sigma(&self, x: &DVector<f64>, sigma: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.agg_dim());
        let mut sp = sigma.clone();
        for r in 0..self.agg_dim() {
            let h = fd_step(sigma[r]);
            sp[r] = sigma[r] + h;
            let plus = self.value(x, &sp);
            sp[r] = sigma[r] - h;
            let minus = self.value(x, &sp);
            sp[r] = sigma[r];
            g[r] = (plus - minus) / (2.0 * h);
        }
        g
    }

    /// Jacobian-transpose of `phi_i`: an `n_i x d` matrix whose `(r, c)`
    /// entry is the derivative of the `c`-th aggregate coordinate in the
    /// `r`-th decision coordinate. Applied as `grad_phi(x) * v` with `v` an
    /// aggregate-space vector.
    fn grad_phi(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jt = DMatrix::zeros(self.local_dim(), self.agg_dim());
        let mut xp = x.clone();
        for r in 0..self.local_dim() {
            let h = fd_step(x[r]);
            xp[r] = x[r] + h;
            let plus = self.phi(&xp);
            xp[r] = x[r] - h;
            let minus = self.phi(&xp);
            xp[r] = x[r];
            for c in 0..self.agg_dim() {
                jt[(r, c)] = (plus[c] - minus[c]) / (2.0 * h);
            }
        }
        jt
    }

    /// Whether the gradient methods are exact (overridden) rather than the
    /// central-difference defaults.
    fn analytic_gradients(&self) -> bool {
        false
    }
}

/// Central-difference step, scaled by coordinate magnitude to balance
/// truncation against rounding error.
pub(crate) fn fd_step(coord: f64) -> f64 {
    1e-6 * coord.abs().max(1.0)
}

/// A full problem instance: agents, aggregate dimension, and optionally
/// analytic constants.
pub struct ProblemSpec {
    name: String,
    agents: Vec<Box<dyn AgentObjective>>,
    agg_dim: usize,
    constants: Option<Constants>,
}

impl ProblemSpec {
    pub fn new(
        name: impl Into<String>,
        agents: Vec<Box<dyn AgentObjective>>,
        constants: Option<Constants>,
    ) -> Result<Self, ModelError> {
        if agents.is_empty() {
            return Err(ModelError::EmptyProblem);
        }
        let agg_dim = agents[0].agg_dim();
        for a in &agents {
            if a.agg_dim() != agg_dim {
                return Err(ModelError::AggDimMismatch(agg_dim, a.agg_dim()));
            }
        }
        Ok(Self { name: name.into(), agents, agg_dim, constants })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agg_dim(&self) -> usize {
        self.agg_dim
    }

    pub fn agent(&self, i: usize) -> &dyn AgentObjective {
        self.agents[i].as_ref()
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.local_dim()).collect()
    }

    /// Total dimension `sum_i n_i` of the stacked decision vector.
    pub fn total_dim(&self) -> usize {
        self.agents.iter().map(|a| a.local_dim()).sum()
    }

    pub fn constants(&self) -> Option<&Constants> {
        self.constants.as_ref()
    }

    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn has_analytic_gradients(&self) -> bool {
        self.agents.iter().all(|a| a.analytic_gradients())
    }

    /// Splits a stacked decision vector into per-agent blocks.
    pub fn blocks(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>, ModelError> {
        if x.len() != self.total_dim() {
            return Err(ModelError::DimensionMismatch { expected: self.total_dim(), got: x.len() });
        }
        let mut out = Vec::with_capacity(self.n_agents());
        let mut offset = 0;
        for a in &self.agents {
            out.push(DVector::from_fn(a.local_dim(), |r, _| x[offset + r]));
            offset += a.local_dim();
        }
        Ok(out)
    }

    /// Stacks per-agent blocks back into one vector.
    pub fn stack(&self, blocks: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.total_dim());
        let mut offset = 0;
        for b in blocks {
            for r in 0..b.len() {
                out[offset + r] = b[r];
            }
            offset += b.len();
        }
        out
    }

    /// The aggregate `sigma(x) = (1/N) sum_i phi_i(x_i)`.
    pub fn sigma(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let blocks = self.blocks(x)?;
        let mut acc = DVector::zeros(self.agg_dim);
        for (a, b) in self.agents.iter().zip(&blocks) {
            acc += a.phi(b);
        }
        Ok(acc / self.n_agents() as f64)
    }

    /// Global objective `f(x) = sum_i f_i(x_i, sigma(x))`.
    pub fn global_objective(&self, x: &DVector<f64>) -> Result<f64, ModelError> {
        let blocks = self.blocks(x)?;
        let sigma = self.sigma(x)?;
        Ok(self.agents.iter().zip(&blocks).map(|(a, b)| a.value(b, &sigma)).sum())
    }

    /// Exact gradient of [`ProblemSpec::global_objective`] by the chain rule
    /// through the aggregate: block `i` is
    /// `grad_x f_i + grad_phi_i * (1/N) sum_j grad_sigma f_j`.
    pub fn full_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let blocks = self.blocks(x)?;
        let sigma = self.sigma(x)?;
        let mut mean_grad_sigma = DVector::zeros(self.agg_dim);
        for (a, b) in self.agents.iter().zip(&blocks) {
            mean_grad_sigma += a.grad_sigma(b, &sigma);
        }
        mean_grad_sigma /= self.n_agents() as f64;
        let mut parts = Vec::with_capacity(self.n_agents());
        for (a, b) in self.agents.iter().zip(&blocks) {
            parts.push(a.grad_x(b, &sigma) + a.grad_phi(b) * &mean_grad_sigma);
        }
        Ok(self.stack(&parts))
    }
}

impl core::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n_agents", &self.n_agents())
            .field("local_dims", &self.local_dims())
            .field("agg_dim", &self.agg_dim)
            .field("constants", &self.constants)
            .finish()
    }
}

/// Quadratic agent with identity aggregate contribution:
///
/// ```text
///     f(x, sigma) = x' Q x / 2 + b' x + sigma' S sigma / 2
///                 + s' sigma + x' W sigma + c0,      phi(x) = x.
/// ```
///
/// `Q` and `S` are stored symmetrized so the analytic gradients
/// `Q x + b + W sigma` and `W' x + S sigma + s` are exact for the value as
/// evaluated. Identity `phi` forces `n_i = d`.
#[derive(Debug, Clone)]
pub struct QuadraticAgent {
    q: DMatrix<f64>,
    b: DVector<f64>,
    s: DMatrix<f64>,
    s_lin: DVector<f64>,
    w: DMatrix<f64>,
    c0: f64,
}

impl QuadraticAgent {
    pub fn new(
        q: DMatrix<f64>,
        b: DVector<f64>,
        s: DMatrix<f64>,
        s_lin: DVector<f64>,
        w: DMatrix<f64>,
        c0: f64,
    ) -> Result<Self, ModelError> {
        let n = b.len();
        let d = s_lin.len();
        if n != d {
            return Err(ModelError::Parse(alloc::format!(
                "identity aggregate map needs local dim = aggregate dim, got {n} vs {d}"
            )));
        }
        for (label, rows, cols, want_r, want_c) in [
            ("q", q.nrows(), q.ncols(), n, n),
            ("s", s.nrows(), s.ncols(), d, d),
            ("w", w.nrows(), w.ncols(), n, d),
        ] {
            if rows != want_r || cols != want_c {
                return Err(ModelError::Parse(alloc::format!(
                    "{label} must be {want_r}x{want_c}, got {rows}x{cols}"
                )));
            }
        }
        let q = (&q + q.transpose()) * 0.5;
        let s = (&s + s.transpose()) * 0.5;
        Ok(Self { q, b, s, s_lin, w, c0 })
    }

    /// The coupled quadratic `x' Q x / 2 + b' x + gamma * ||x - sigma||^2`,
    /// the shape accepted by the text loader.
    pub fn coupled(q: DMatrix<f64>, b: DVector<f64>, gamma: f64) -> Result<Self, ModelError> {
        let n = b.len();
        let eye = DMatrix::identity(n, n);
        Self::new(
            &q + 2.0 * gamma * &eye,
            b,
            2.0 * gamma * &eye,
            DVector::zeros(n),
            -2.0 * gamma * eye,
            0.0,
        )
    }
}

impl AgentObjective for QuadraticAgent {
    fn local_dim(&self) -> usize {
        self.b.len()
    }

    fn agg_dim(&self) -> usize {
        self.s_lin.len()
    }

    fn phi(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn value(&self, x: &DVector<f64>, sigma: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.q * x)[0]
            + self.b.dot(x)
            + 0.5 * (sigma.transpose() * &self.s * sigma)[0]
            + self.s_lin.dot(sigma)
            + (x.transpose() * &self.w * sigma)[0]
            + self.c0
    }

    fn grad_x(&self, x: &DVector<f64>, sigma: &DVector<f64>) -> DVector<f64> {
        &self.q * x + &self.b + &self.w * sigma
    }

    fn grad_sigma(&self, x: &DVector<f64>, sigma: &DVector<f64>) -> DVector<f64> {
        self.w.transpose() * x + &self.s * sigma + &self.s_lin
    }

    fn grad_phi(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.local_dim(), self.agg_dim())
    }

    fn analytic_gradients(&self) -> bool {
        true
    }
}

/// Two scalar agents whose objectives are `(x_1 - 1)^2 + sigma(x)^2` and
/// `(x_2 - 2)^2 + sigma(x)^2` with identity aggregate maps.
///
/// The cooperative optimum is `(1/4, 5/4)`; making each agent stationary in
/// its own variable instead lands at `(1/2, 3/2)`, so the instance doubles
/// as a contrast between joint minimization and selfish equilibrium.
/// Constants are exact: the global Hessian is `[[3, 1], [1, 3]]`, giving
/// `mu = 2` and `l1 = 4`; the stacked `grad_sigma` map has joint Lipschitz
/// constant 2 and the aggregate Jacobians are identity, so `l3 = 1`.
pub fn builtin_example1() -> ProblemSpec {
    let agent = |center: f64| -> Box<dyn AgentObjective> {
        Box::new(
            QuadraticAgent::new(
                DMatrix::from_element(1, 1, 2.0),
                DVector::from_element(1, -2.0 * center),
                DMatrix::from_element(1, 1, 2.0),
                DVector::zeros(1),
                DMatrix::zeros(1, 1),
                center * center,
            )
            .expect("static dimensions"),
        )
    };
    let constants = Constants::analytic(2.0, 4.0, 2.0, 1.0).expect("static constants");
    ProblemSpec::new("example1", alloc::vec![agent(1.0), agent(2.0)], Some(constants))
        .expect("static problem")
}

/// Anchor points for [`builtin_placement`].
pub const PLACEMENT_ANCHORS: [[f64; 2]; 5] = [[3.0, 5.0], [6.0, 9.0], [9.0, 8.0], [6.0, 2.0], [9.0, 2.0]];

/// Five planar agents, each pulled toward a private anchor while staying
/// close to the swarm centroid:
///
/// ```text
///     f_i(x_i, sigma) = gamma_i ||x_i - r_i||^2 + ||x_i - sigma||^2,
/// ```
///
/// with `gamma_i = i` (1-based), anchors `r_i` from [`PLACEMENT_ANCHORS`],
/// and identity aggregate maps, so `sigma(x)` is the centroid.
///
/// Attached constants: `l3 = 1` and `l2 = 2` are exact by inspection
/// (`grad_sigma f_i = 2 (sigma - x_i)`); `mu` and `l1` are the extreme
/// eigenvalues of the exact `10x10` Hessian
/// `2 diag(gamma_i + 1) (x) I - (2/N) ones (x) I`, computed by a dense
/// symmetric eigensolve.
pub fn builtin_placement() -> ProblemSpec {
    let n_agents = PLACEMENT_ANCHORS.len();
    let mut agents: Vec<Box<dyn AgentObjective>> = Vec::with_capacity(n_agents);
    for (idx, anchor) in PLACEMENT_ANCHORS.iter().enumerate() {
        let gamma = (idx + 1) as f64;
        let r = DVector::from_row_slice(anchor);
        let q = DMatrix::from_diagonal_element(2, 2, 2.0 * gamma);
        let b = -2.0 * gamma * &r;
        let agent = QuadraticAgent::coupled(q, b, 1.0).expect("static dimensions");
        // coupled() leaves c0 = 0; add gamma * ||r||^2 so values match the
        // expansion of gamma * ||x - r||^2 exactly.
        let agent = QuadraticAgent { c0: gamma * r.norm_squared(), ..agent };
        agents.push(Box::new(agent));
    }
    let hessian = placement_hessian(n_agents);
    let eigen = hessian.symmetric_eigen();
    let mu = eigen.eigenvalues.min();
    let l1 = eigen.eigenvalues.max();
    let constants = Constants::analytic(mu, l1, 2.0, 1.0).expect("spectrum is positive");
    ProblemSpec::new("placement", agents, Some(constants)).expect("static problem")
}

/// Exact Hessian of the placement objective: block-diagonal pulls plus the
/// rank-one centroid coupling, `2 diag(gamma_i + 1) (x) I_2 - (2/N) ones (x) I_2`.
fn placement_hessian(n_agents: usize) -> DMatrix<f64> {
    let dim = 2 * n_agents;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n_agents {
        let gamma = (i + 1) as f64;
        for c in 0..2 {
            h[(2 * i + c, 2 * i + c)] = 2.0 * (gamma + 1.0);
        }
    }
    let coupling = 2.0 / n_agents as f64;
    for i in 0..n_agents {
        for j in 0..n_agents {
            for c in 0..2 {
                h[(2 * i + c, 2 * j + c)] -= coupling;
            }
        }
    }
    h
}

/// Uniform sampling box for constant estimation, applied per coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub lo: f64,
    pub hi: f64,
}

/// Raw Monte-Carlo constant estimates plus a convexity warning flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimates {
    pub mu: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// Set when the sampled strong-convexity modulus is not positive.
    pub not_strongly_convex: bool,
}

impl ConstantEstimates {
    pub fn into_constants(self) -> Result<Constants, ModelError> {
        Constants::new(self.mu, self.l1, self.l2, self.l3, Provenances::uniform(Provenance::Estimated))
    }
}

/// Monte-Carlo estimates of the problem constants from sampled difference
/// quotients.
///
/// `l1` is the largest observed gradient difference quotient of the global
/// objective, `l2` the largest joint quotient of the stacked `grad_sigma`
/// map (each agent fed its own sampled aggregate), `l3` the largest sampled
/// `grad_phi` operator norm, and `mu` the smallest sampled secant modulus
/// `2 (f(x') - f(x) - grad f(x)'(x' - x)) / ||x' - x||^2`. The gradient
/// quotients approach the true constants from below as sampling densifies;
/// the secant modulus approaches `mu` from above. Deterministic given the
/// seed.
pub fn estimate_constants(
    p: &ProblemSpec,
    sample_box: SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<ConstantEstimates, ModelError> {
    if !(sample_box.hi > sample_box.lo) {
        return Err(ModelError::DegenerateSampleBox { lo: sample_box.lo, hi: sample_box.hi });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = p.total_dim();
    let d = p.agg_dim();
    let n = p.n_agents();
    let draw = |len: usize, rng: &mut ChaCha8Rng| {
        DVector::from_fn(len, |_, _| rng.gen_range(sample_box.lo..sample_box.hi))
    };
    let mut l1 = 0.0f64;
    let mut l2 = 0.0f64;
    let mut l3 = 0.0f64;
    let mut mu = f64::INFINITY;
    for _ in 0..n_samples.max(1) {
        let xa = draw(dim, &mut rng);
        let xb = draw(dim, &mut rng);
        let ga = p.full_gradient(&xa)?;
        let gb = p.full_gradient(&xb)?;
        let dx = (&xb - &xa).norm();
        if dx > 0.0 {
            l1 = l1.max((&gb - &ga).norm() / dx);
            let secant = 2.0 * (p.global_objective(&xb)? - p.global_objective(&xa)? - ga.dot(&(&xb - &xa)))
                / (dx * dx);
            mu = mu.min(secant);
        }
        // Stacked grad_sigma quotient: each agent sees its own aggregate
        // sample, matching how trackers feed the iteration.
        let ua = draw(n * d, &mut rng);
        let ub = draw(n * d, &mut rng);
        let blocks_a = p.blocks(&xa)?;
        let blocks_b = p.blocks(&xb)?;
        let mut num = 0.0f64;
        for i in 0..n {
            let sa = DVector::from_fn(d, |r, _| ua[i * d + r]);
            let sb = DVector::from_fn(d, |r, _| ub[i * d + r]);
            num += (p.agent(i).grad_sigma(&blocks_b[i], &sb) - p.agent(i).grad_sigma(&blocks_a[i], &sa))
                .norm_squared();
            l3 = l3.max(operator_norm(&p.agent(i).grad_phi(&blocks_a[i])));
        }
        let den = dx + (&ub - &ua).norm();
        if den > 0.0 {
            l2 = l2.max(nalgebra::ComplexField::sqrt(num) / den);
        }
    }
    let not_strongly_convex = !(mu > 0.0);
    Ok(ConstantEstimates { mu: mu.max(0.0), l1, l2, l3, not_strongly_convex })
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.clone().singular_values()[0]
    }
}

/// Constants to use for step-size selection: analytic ones attached to the
/// problem take precedence; otherwise Monte-Carlo estimates are computed.
pub fn effective_constants(
    p: &ProblemSpec,
    sample_box: SampleBox,
    n_samples: usize,
    seed: u64,
) -> Result<Constants, ModelError> {
    match p.constants() {
        Some(c) => Ok(*c),
        None => estimate_constants(p, sample_box, n_samples, seed)?.into_constants(),
    }
}

/// Parses a coupled-quadratic problem from text.
///
/// Global keys `n_agents=` and `dim=` come first; each agent `i` then gets
/// `agent<i>.q=` (a `dim x dim` matrix, rows separated by `;`, entries by
/// whitespace), `agent<i>.b=` (a `dim` vector, default zero), and
/// `agent<i>.gamma=` (a scalar, default zero). Optional `mu=`, `l1=`,
/// `l2=`, `l3=` attach analytic constants (all four or none). Blank lines
/// and `#` comments are ignored. Every agent's objective is
/// `x' Q x / 2 + b' x + gamma ||x - sigma||^2` with identity aggregate map.
pub fn parse_quadratic_problem(text: &str) -> Result<ProblemSpec, ModelError> {
    let mut n_agents: Option<usize> = None;
    let mut dim: Option<usize> = None;
    let mut consts: [Option<f64>; 4] = [None; 4];
    let mut agent_fields: Vec<(usize, &str, &str)> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ModelError::Parse(alloc::format!("expected key=value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n_agents" => n_agents = Some(parse_num(key, value)? as usize),
            "dim" => dim = Some(parse_num(key, value)? as usize),
            "mu" => consts[0] = Some(parse_num(key, value)?),
            "l1" => consts[1] = Some(parse_num(key, value)?),
            "l2" => consts[2] = Some(parse_num(key, value)?),
            "l3" => consts[3] = Some(parse_num(key, value)?),
            _ => {
                let rest = key
                    .strip_prefix("agent")
                    .ok_or_else(|| ModelError::Parse(alloc::format!("unknown key {key:?}")))?;
                let (idx, field) = rest
                    .split_once('.')
                    .ok_or_else(|| ModelError::Parse(alloc::format!("expected agent<i>.<field>, got {key:?}")))?;
                let idx: usize = idx
                    .parse()
                    .map_err(|_| ModelError::Parse(alloc::format!("bad agent index in {key:?}")))?;
                agent_fields.push((idx, field, value));
            }
        }
    }
    let n_agents = n_agents.ok_or_else(|| ModelError::Parse("missing n_agents=".into()))?;
    let dim = dim.ok_or_else(|| ModelError::Parse("missing dim=".into()))?;
    if n_agents == 0 || dim == 0 {
        return Err(ModelError::Parse("n_agents and dim must be positive".into()));
    }
    let mut qs: Vec<DMatrix<f64>> = (0..n_agents).map(|_| DMatrix::zeros(dim, dim)).collect();
    let mut bs: Vec<DVector<f64>> = (0..n_agents).map(|_| DVector::zeros(dim)).collect();
    let mut gammas = alloc::vec![0.0f64; n_agents];
    for (idx, field, value) in agent_fields {
        if idx >= n_agents {
            return Err(ModelError::Parse(alloc::format!("agent index {idx} out of range (n_agents = {n_agents})")));
        }
        match field {
            "q" => qs[idx] = parse_matrix_text(value, dim, dim)?,
            "b" => bs[idx] = parse_vector_text(value, dim)?,
            "gamma" => gammas[idx] = parse_num("gamma", value)?,
            other => return Err(ModelError::Parse(alloc::format!("unknown agent field {other:?}"))),
        }
    }
    let mut agents: Vec<Box<dyn AgentObjective>> = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        agents.push(Box::new(QuadraticAgent::coupled(qs[i].clone(), bs[i].clone(), gammas[i])?));
    }
    let constants = match consts {
        [Some(mu), Some(l1), Some(l2), Some(l3)] => {
            Some(Constants::analytic(mu, l1, l2, l3)?)
        }
        [None, None, None, None] => None,
        _ => return Err(ModelError::Parse("constants must be given all together (mu, l1, l2, l3) or not at all".into())),
    };
    ProblemSpec::new("custom-quadratic", agents, constants)
}

fn parse_num(key: &str, value: &str) -> Result<f64, ModelError> {
    value
        .parse()
        .map_err(|_| ModelError::Parse(alloc::format!("bad number for {key}: {value:?}")))
}

fn parse_matrix_text(value: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, ModelError> {
    let parsed: Result<Vec<Vec<f64>>, ModelError> = value
        .split(';')
        .map(|row| {
            row.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| ModelError::Parse(alloc::format!("bad matrix entry {t:?}"))))
                .collect()
        })
        .collect();
    let parsed = parsed?;
    if parsed.len() != rows || parsed.iter().any(|r| r.len() != cols) {
        return Err(ModelError::Parse(alloc::format!("matrix must be {rows}x{cols}: {value:?}")));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| parsed[i][j]))
}

fn parse_vector_text(value: &str, len: usize) -> Result<DVector<f64>, ModelError> {
    let parsed: Result<Vec<f64>, ModelError> = value
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| ModelError::Parse(alloc::format!("bad vector entry {t:?}"))))
        .collect();
    let parsed = parsed?;
    if parsed.len() != len {
        return Err(ModelError::Parse(alloc::format!("vector must have {len} entries: {value:?}")));
    }
    Ok(DVector::from_vec(parsed))
}
