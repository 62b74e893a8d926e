//! Reference computations that distributed runs are judged against.
//!
//! Nothing in this module is distributed. The centralized solver sees the
//! whole stacked decision vector at once and either solves the stationarity
//! system of an affine-gradient (quadratic) problem exactly or runs plain
//! gradient descent on the global objective. A finite-difference gradient
//! of the global objective double-checks analytic gradients. The Nash
//! point of the two-agent benchmark is computed as a contrast: an agent
//! that accounts only for its own share of the aggregate stops at a
//! different point than the global optimum, which is what makes tracking
//! the full aggregate worth the trouble.
//!
//! The two solve paths are deliberately independent implementations so
//! that agreement between them carries evidential weight; when they
//! disagree beyond tolerance on a quadratic problem, one of them is wrong
//! and a test should fail rather than pick a winner.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::model::{builtin_example1, estimate_constants, ModelError, ProblemSpec, SampleBox};

/// Upper limit on the gradient norm at any reported solution.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

/// Gradient descent stops once the gradient norm falls below this.
const GD_TARGET: f64 = 1e-10;

/// Gradient-descent iteration budget.
const GD_BUDGET: usize = 200_000;

/// Relative tolerance of the affinity probe on the gradient map.
const AFFINE_TOL: f64 = 1e-8;

/// Sampling box used to estimate constants when gradient descent needs a
/// step size and the problem carries none.
const FALLBACK_BOX: SampleBox = SampleBox { lo: -2.0, hi: 2.0 };

/// Errors from the reference solvers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    /// Gradient descent ran out of budget above the gradient-norm target.
    #[error("gradient descent stalled at ||grad f|| = {last:e} after {budget} iterations")]
    NonConvergence { budget: usize, last: f64 },
    /// The gradient map failed the affinity probe, so there is no linear
    /// stationarity system to solve.
    #[error("gradient map is not affine; no linear stationarity system exists")]
    NotAffine,
    /// A candidate solution's gradient norm exceeded [`RESIDUAL_LIMIT`].
    #[error("solution residual {0:e} exceeds the 1e-8 limit")]
    ResidualTooLarge(f64),
    /// Malformed solution text.
    #[error("solution text: {0}")]
    Parse(String),
}

/// Which path produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Exact solve of the affine stationarity system.
    LinearSystem,
    /// Fixed-step gradient descent on the global objective.
    CentralizedGd,
}

impl core::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolveMethod::LinearSystem => write!(f, "linear-system"),
            SolveMethod::CentralizedGd => write!(f, "centralized-gd"),
        }
    }
}

/// A centralized solution: the minimizer, the aggregate there, the
/// objective value, and how trustworthy the result is.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x_star: DVector<f64>,
    pub sigma_star: DVector<f64>,
    pub objective_at_star: f64,
    pub method: SolveMethod,
    /// Gradient norm at `x_star`; always below [`RESIDUAL_LIMIT`].
    pub residual: f64,
}

impl OracleSolution {
    /// Serializes to `key=value` lines; vectors are space-separated. The
    /// shortest round-trip decimal form is used, so [`OracleSolution::parse`]
    /// recovers the exact bits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&alloc::format!("method={}\n", self.method));
        out.push_str(&alloc::format!("objective={}\n", self.objective_at_star));
        out.push_str(&alloc::format!("residual={}\n", self.residual));
        out.push_str(&vector_line("x_star", &self.x_star));
        out.push_str(&vector_line("sigma_star", &self.sigma_star));
        out
    }

    /// Parses the format written by [`OracleSolution::to_text`]. Blank
    /// lines and `#` comments are ignored; every other line must be one of
    /// the five known keys.
    pub fn parse(text: &str) -> Result<Self, OracleError> {
        let mut method = None;
        let mut objective = None;
        let mut residual = None;
        let mut x_star = None;
        let mut sigma_star = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| OracleError::Parse(alloc::format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "method" => {
                    method = Some(match value {
                        "linear-system" => SolveMethod::LinearSystem,
                        "centralized-gd" => SolveMethod::CentralizedGd,
                        other => {
                            return Err(OracleError::Parse(alloc::format!("unknown method {other:?}")))
                        }
                    })
                }
                "objective" => objective = Some(parse_num(key, value)?),
                "residual" => residual = Some(parse_num(key, value)?),
                "x_star" => x_star = Some(parse_vector(key, value)?),
                "sigma_star" => sigma_star = Some(parse_vector(key, value)?),
                other => return Err(OracleError::Parse(alloc::format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| OracleError::Parse(alloc::format!("missing key {k}"));
        Ok(Self {
            x_star: x_star.ok_or_else(|| missing("x_star"))?,
            sigma_star: sigma_star.ok_or_else(|| missing("sigma_star"))?,
            objective_at_star: objective.ok_or_else(|| missing("objective"))?,
            method: method.ok_or_else(|| missing("method"))?,
            residual: residual.ok_or_else(|| missing("residual"))?,
        })
    }
}

fn vector_line(key: &str, v: &DVector<f64>) -> String {
    let mut line = String::new();
    line.push_str(key);
    line.push('=');
    for (j, entry) in v.iter().enumerate() {
        if j > 0 {
            line.push(' ');
        }
        line.push_str(&alloc::format!("{entry}"));
    }
    line.push('\n');
    line
}

fn parse_num(key: &str, value: &str) -> Result<f64, OracleError> {
    value
        .parse::<f64>()
        .map_err(|_| OracleError::Parse(alloc::format!("{key}: not a number: {value:?}")))
}

fn parse_vector(key: &str, value: &str) -> Result<DVector<f64>, OracleError> {
    let mut entries = Vec::new();
    for tok in value.split_whitespace() {
        entries.push(parse_num(key, tok)?);
    }
    Ok(DVector::from_vec(entries))
}

/// Solves the centralized problem, picking the path automatically: the
/// exact linear-system solve when the gradient map probes as affine (every
/// quadratic problem does), gradient descent otherwise.
pub fn centralized_solve(p: &ProblemSpec) -> Result<OracleSolution, OracleError> {
    match try_linear_system(p)? {
        Some(sol) => Ok(sol),
        None => gd_solve(p),
    }
}

/// Solves with a caller-chosen path. The linear-system path fails with
/// [`OracleError::NotAffine`] on problems whose gradient map is not affine
/// (and on affine maps with singular or ill-conditioned systems, which
/// leave no exact stationary point to report).
pub fn centralized_solve_with(p: &ProblemSpec, method: SolveMethod) -> Result<OracleSolution, OracleError> {
    match method {
        SolveMethod::LinearSystem => try_linear_system(p)?.ok_or(OracleError::NotAffine),
        SolveMethod::CentralizedGd => gd_solve(p),
    }
}

/// Central finite differences of the global objective, one coordinate at a
/// time, with the step scaled by the coordinate's magnitude.
pub fn fd_gradient(p: &ProblemSpec, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let h = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let plus = p.global_objective(&xp)?;
        xp[j] = x[j] - h;
        let minus = p.global_objective(&xp)?;
        xp[j] = x[j];
        g[j] = (plus - minus) / (2.0 * h);
    }
    Ok(g)
}

/// Nash point of the two-agent benchmark: each agent zeroes the gradient
/// of its own objective in its own block, crediting itself with exactly
/// its `1/N` share of influence on the aggregate. The resulting
/// stationarity map is affine, so the point solves a 2x2 linear system
/// exactly. It differs from the global optimum because neither agent
/// accounts for the other's loss through the aggregate.
pub fn nash_solve_example1() -> DVector<f64> {
    let p = builtin_example1();
    let n = p.total_dim();
    let share = 1.0 / p.n_agents() as f64;
    let selfish_map = |x: &DVector<f64>| -> DVector<f64> {
        let blocks = p.blocks(x).expect("benchmark dimensions are fixed");
        let sigma = p.sigma(x).expect("benchmark dimensions are fixed");
        let per: Vec<DVector<f64>> = blocks
            .iter()
            .enumerate()
            .map(|(i, xi)| {
                let a = p.agent(i);
                a.grad_x(xi, &sigma) + a.grad_phi(xi) * a.grad_sigma(xi, &sigma) * share
            })
            .collect();
        p.stack(&per)
    };
    let (h, g0) = probe_columns(n, selfish_map);
    h.lu()
        .solve(&(-g0))
        .expect("benchmark stationarity system is invertible")
}

/// Evaluates `map` at zero and at each unit vector, returning the matrix
/// of column differences and the value at zero. For an affine map `g`,
/// `g(x) = H x + g0` exactly.
fn probe_columns(n: usize, mut map: impl FnMut(&DVector<f64>) -> DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let g0 = map(&DVector::zeros(n));
    let mut h = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        let gj = map(&e);
        h.set_column(j, &(gj - &g0));
        e[j] = 0.0;
    }
    (h, g0)
}

/// Probes the global gradient for affinity and, when it holds, solves the
/// stationarity system exactly. Returns `Ok(None)` when the map is not
/// affine, the system is singular, or the candidate's residual is too
/// large to trust (the automatic path then falls back to descent).
fn try_linear_system(p: &ProblemSpec) -> Result<Option<OracleSolution>, OracleError> {
    let n = p.total_dim();
    let mut fallible = Ok(());
    let (h, g0) = probe_columns(n, |x| match p.full_gradient(x) {
        Ok(g) => g,
        Err(e) => {
            fallible = Err(e);
            DVector::zeros(n)
        }
    });
    fallible?;
    // Affinity check at a point unrelated to the probe points.
    let t = DVector::from_fn(n, |j, _| {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign * (0.375 + 0.25 * j as f64)
    });
    let gt = p.full_gradient(&t)?;
    let predicted = &h * &t + &g0;
    if (&gt - predicted).norm() > AFFINE_TOL * (1.0 + gt.norm()) {
        return Ok(None);
    }
    let Some(x_star) = h.lu().solve(&(-g0)) else {
        return Ok(None);
    };
    let residual = p.full_gradient(&x_star)?.norm();
    if !(residual < RESIDUAL_LIMIT) {
        return Ok(None);
    }
    Ok(Some(OracleSolution {
        sigma_star: p.sigma(&x_star)?,
        objective_at_star: p.global_objective(&x_star)?,
        method: SolveMethod::LinearSystem,
        residual,
        x_star,
    }))
}

/// Fixed-step gradient descent from the origin with step `1/L1`, using the
/// problem's constants or, failing that, estimated ones. Only the two
/// constants descent actually needs are required, so problems with trivial
/// aggregates (whose aggregate constants are legitimately zero) still
/// solve. Strong convexity makes the iteration a contraction, so hitting
/// the gradient target is a matter of budget.
fn gd_solve(p: &ProblemSpec) -> Result<OracleSolution, OracleError> {
    let (mu, l1) = match p.constants() {
        Some(c) => (c.mu, c.l1),
        None => {
            let est = estimate_constants(p, FALLBACK_BOX, 200, 0x0D67)?;
            (est.mu, est.l1)
        }
    };
    for (name, v) in [("mu", mu), ("l1", l1)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(OracleError::Model(ModelError::InvalidConstants(alloc::format!(
                "{name} = {v} must be positive for descent; the objective may not be strongly convex"
            ))));
        }
    }
    let alpha = 1.0 / l1;
    let mut x = DVector::zeros(p.total_dim());
    let mut norm = f64::INFINITY;
    for _ in 0..GD_BUDGET {
        let g = p.full_gradient(&x)?;
        norm = g.norm();
        if norm < GD_TARGET {
            return Ok(OracleSolution {
                sigma_star: p.sigma(&x)?,
                objective_at_star: p.global_objective(&x)?,
                method: SolveMethod::CentralizedGd,
                residual: norm,
                x_star: x,
            });
        }
        x.axpy(-alpha, &g, 1.0);
    }
    Err(OracleError::NonConvergence { budget: GD_BUDGET, last: norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_placement, AgentObjective};
    use alloc::boxed::Box;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_agent_benchmark_centralized_optimum_is_exact() {
        let sol = centralized_solve(&builtin_example1()).unwrap();
        assert_eq!(sol.method, SolveMethod::LinearSystem);
        assert!((sol.x_star[0] - 0.25).abs() < 1e-12);
        assert!((sol.x_star[1] - 1.25).abs() < 1e-12);
        assert!((sol.sigma_star[0] - 0.75).abs() < 1e-12);
        assert!((sol.objective_at_star - 2.25).abs() < 1e-12);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn placement_linear_and_descent_paths_agree() {
        let p = builtin_placement();
        let lin = centralized_solve(&p).unwrap();
        assert_eq!(lin.method, SolveMethod::LinearSystem);
        assert!(lin.residual < 1e-10);
        let gd = centralized_solve_with(&p, SolveMethod::CentralizedGd).unwrap();
        assert_eq!(gd.method, SolveMethod::CentralizedGd);
        assert!(gd.residual < 1e-10);
        assert!((&lin.x_star - &gd.x_star).norm() < 1e-7);
        assert!((lin.objective_at_star - gd.objective_at_star).abs() < 1e-7);

        // Frozen from an independent dense solve of the same stationarity
        // system.
        let expected = [
            4.95774647887324,
            5.002347417840376,
            6.305164319248827,
            7.668231611893585,
            8.478873239436622,
            7.25117370892019,
            6.183098591549296,
            2.60093896713615,
            8.652582159624412,
            2.500782472613458,
        ];
        for (j, e) in expected.iter().enumerate() {
            assert!((lin.x_star[j] - e).abs() < 1e-9, "coordinate {j}");
        }
        assert!((lin.sigma_star[0] - 6.91549295774648).abs() < 1e-9);
        assert!((lin.sigma_star[1] - 5.004694835680752).abs() < 1e-9);
        assert!((lin.objective_at_star - 47.89123630672926).abs() < 1e-9);
    }

    /// An agent with no aggregate at all: the aggregate space is
    /// zero-dimensional and every aggregate-facing method returns an empty
    /// object of the right shape.
    struct PointAgent {
        center: DVector<f64>,
    }

    impl AgentObjective for PointAgent {
        fn local_dim(&self) -> usize {
            self.center.len()
        }
        fn agg_dim(&self) -> usize {
            0
        }
        fn phi(&self, _x: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn value(&self, x: &DVector<f64>, _sigma: &DVector<f64>) -> f64 {
            (x - &self.center).norm_squared()
        }
        fn grad_x(&self, x: &DVector<f64>, _sigma: &DVector<f64>) -> DVector<f64> {
            2.0 * (x - &self.center)
        }
        fn grad_sigma(&self, _x: &DVector<f64>, _sigma: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn grad_phi(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(self.center.len(), 0)
        }
        fn analytic_gradients(&self) -> bool {
            true
        }
    }

    #[test]
    fn single_agent_with_no_aggregate_recovers_its_center() {
        let center = DVector::from_vec(alloc::vec![1.5, -2.0, 0.25]);
        let p = ProblemSpec::new(
            "point",
            alloc::vec![Box::new(PointAgent { center: center.clone() }) as _],
            None,
        )
        .unwrap();
        let sol = centralized_solve(&p).unwrap();
        assert_eq!(sol.method, SolveMethod::LinearSystem);
        assert!((&sol.x_star - &center).norm() < 1e-12);
        assert_eq!(sol.sigma_star.len(), 0);
        assert!(sol.objective_at_star.abs() < 1e-12);
    }

    /// Strongly convex but not quadratic, so only descent applies.
    struct QuarticAgent;

    impl AgentObjective for QuarticAgent {
        fn local_dim(&self) -> usize {
            1
        }
        fn agg_dim(&self) -> usize {
            0
        }
        fn phi(&self, _x: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn value(&self, x: &DVector<f64>, _sigma: &DVector<f64>) -> f64 {
            x[0] * x[0] + x[0] * x[0] * x[0] * x[0]
        }
        fn grad_x(&self, x: &DVector<f64>, _sigma: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(alloc::vec![2.0 * x[0] + 4.0 * x[0] * x[0] * x[0]])
        }
        fn grad_sigma(&self, _x: &DVector<f64>, _sigma: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn grad_phi(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, 0)
        }
        fn analytic_gradients(&self) -> bool {
            true
        }
    }

    fn quartic_problem() -> ProblemSpec {
        ProblemSpec::new("quartic", alloc::vec![Box::new(QuarticAgent) as _], None).unwrap()
    }

    #[test]
    fn nonquadratic_problem_falls_back_to_descent() {
        let sol = centralized_solve(&quartic_problem()).unwrap();
        assert_eq!(sol.method, SolveMethod::CentralizedGd);
        assert!(sol.residual < 1e-10);
        assert!(sol.x_star.norm() < 1e-9);
    }

    #[test]
    fn linear_system_path_rejects_a_nonaffine_gradient() {
        let err = centralized_solve_with(&quartic_problem(), SolveMethod::LinearSystem).unwrap_err();
        assert_eq!(err, OracleError::NotAffine);
    }

    /// Affine gradient with a singular stationarity system and no strong
    /// convexity anywhere.
    struct LinearAgent;

    impl AgentObjective for LinearAgent {
        fn local_dim(&self) -> usize {
            2
        }
        fn agg_dim(&self) -> usize {
            0
        }
        fn phi(&self, _x: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn value(&self, x: &DVector<f64>, _sigma: &DVector<f64>) -> f64 {
            x[0] + x[1]
        }
        fn grad_x(&self, _x: &DVector<f64>, _sigma: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(alloc::vec![1.0, 1.0])
        }
        fn grad_sigma(&self, _x: &DVector<f64>, _sigma: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn grad_phi(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(2, 0)
        }
        fn analytic_gradients(&self) -> bool {
            true
        }
    }

    #[test]
    fn unbounded_objective_reports_its_missing_convexity() {
        let p = ProblemSpec::new("slope", alloc::vec![Box::new(LinearAgent) as _], None).unwrap();
        // The singular stationarity system falls through to descent, whose
        // constant estimation then rejects the problem.
        let err = centralized_solve(&p).unwrap_err();
        assert!(matches!(err, OracleError::Model(ModelError::InvalidConstants(_))), "{err:?}");
    }

    struct SquareAgent;

    impl AgentObjective for SquareAgent {
        fn local_dim(&self) -> usize {
            1
        }
        fn agg_dim(&self) -> usize {
            0
        }
        fn phi(&self, _x: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn value(&self, x: &DVector<f64>, _sigma: &DVector<f64>) -> f64 {
            x[0] * x[0]
        }
    }

    struct ConstantAgent;

    impl AgentObjective for ConstantAgent {
        fn local_dim(&self) -> usize {
            3
        }
        fn agg_dim(&self) -> usize {
            0
        }
        fn phi(&self, _x: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn value(&self, _x: &DVector<f64>, _sigma: &DVector<f64>) -> f64 {
            7.0
        }
    }

    #[test]
    fn fd_gradient_matches_simple_closed_forms() {
        let p = ProblemSpec::new("square", alloc::vec![Box::new(SquareAgent) as _], None).unwrap();
        let g = fd_gradient(&p, &DVector::from_vec(alloc::vec![3.0])).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);

        let flat = ProblemSpec::new("flat", alloc::vec![Box::new(ConstantAgent) as _], None).unwrap();
        let g = fd_gradient(&flat, &DVector::from_vec(alloc::vec![0.3, -4.0, 11.0])).unwrap();
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn fd_gradient_matches_the_benchmark_analytic_gradient() {
        let p = builtin_example1();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..30 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let fd = fd_gradient(&p, &x).unwrap();
            let analytic = p.full_gradient(&x).unwrap();
            assert!((&fd - &analytic).norm() / analytic.norm().max(1.0) < 1e-5);
        }
    }

    #[test]
    fn nash_point_differs_from_the_global_optimum() {
        let nash = nash_solve_example1();
        assert!((nash[0] - 0.5).abs() < 1e-12);
        assert!((nash[1] - 1.5).abs() < 1e-12);

        let p = builtin_example1();
        let opt = centralized_solve(&p).unwrap().x_star;
        let gap = (&nash - &opt).norm();
        assert!((gap - 0.25 * core::f64::consts::SQRT_2).abs() < 1e-12);

        // The global objective is not stationary at the Nash point.
        let g = p.full_gradient(&nash).unwrap();
        assert!((g.norm() - core::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn solution_text_round_trips_bitwise() {
        let sol = centralized_solve(&builtin_placement()).unwrap();
        let text = sol.to_text();
        let back = OracleSolution::parse(&text).unwrap();
        assert_eq!(back, sol);
    }

    #[test]
    fn malformed_solution_text_is_rejected() {
        let ok = centralized_solve(&builtin_example1()).unwrap().to_text();
        for bad in [
            "method=linear-system\nobjective=1\nresidual=0\nx_star=1 2\n",
            "method=alchemy\nobjective=1\nresidual=0\nx_star=1\nsigma_star=1\n",
            "method=linear-system\nobjective=one\nresidual=0\nx_star=1\nsigma_star=1\n",
            "method=linear-system\nobjective=1\nresidual=0\nx_star=1 eel\nsigma_star=1\n",
            "who goes there\n",
            "mystery=4\n",
        ] {
            assert!(matches!(OracleSolution::parse(bad), Err(OracleError::Parse(_))), "{bad:?}");
        }
        // Comments and blank lines are fine.
        let commented = alloc::format!("# reference point\n\n{ok}");
        assert!(OracleSolution::parse(&commented).is_ok());
    }
}
