//! Numerical checks of the convergence machinery.
//!
//! The convergence argument for the tracking iteration bounds a composite
//! residual vector (optimality gap, aggregate-tracker disagreement,
//! gradient-tracker disagreement) by a linear recursion `theta_{k+1} <=
//! M(alpha) theta_k` with a 3x3 comparison matrix `M(alpha) = X + alpha E`.
//! Its spectral radius dropping below one is what certifies a linear rate.
//! This module builds that matrix, measures its spectral radius, fits
//! empirical contraction factors from recorded traces, and audits the two
//! conservation identities the argument rests on.
//!
//! The comparison matrix bounds a worst case, so the fitted empirical
//! factor is usually well below its spectral radius; both are reported
//! side by side and no tightness is asserted.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{ComplexField, DVector, Matrix3};

use crate::engine::{max_stepsize, EngineError, SwarmState, Trace, TraceRow};
use crate::model::{Constants, ProblemSpec};

/// Optimality gaps below this are floating-point noise and are excluded
/// from rate fits.
pub const FIT_FLOOR: f64 = 1e-12;

/// A rate fit needs at least this many usable trace points.
pub const MIN_FIT_POINTS: usize = 20;

/// Errors from rate fitting and conservation audits.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("step size must be nonnegative and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("spectral gap must lie in [0, 1), got {0}")]
    RhoOutOfRange(f64),
    #[error("trace has no optimality-gap column; run with a reference optimum to populate it")]
    MissingOptimalityGap,
    #[error("rate fit needs at least {needed} usable points above the noise floor, found {usable}")]
    InsufficientData { usable: usize, needed: usize },
    #[error("trace does not contract: fitted factor {empirical_q} is at or above 1")]
    NonContracting { empirical_q: f64 },
    #[error("tracking audit needs recorded states; rerun with state recording enabled")]
    StatesNotRecorded,
    #[error("state holds {state} agents but the problem has {problem}")]
    AgentCountMismatch { state: usize, problem: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Builds the comparison matrix `M(alpha) = X + alpha E` from the problem
/// constants and the mixing contraction factor `rho`:
///
/// ```text
///     X = [ 1    0    0  ]        E = [ -mu            l1            l3          ]
///         [ 0    rho  0  ]            [ l1 l2 (1+l3)   l1 l3         l3^2        ]
///         [ 0    2 l2 rho]            [ l1 l2 (1+l3)^2 l1 l2 (1+l3)  l2 l3 (1+l3)]
/// ```
///
/// Every entry of `E` except the top-left is nonnegative, so `-mu` is the
/// only route by which growing `alpha` can shrink the spectral radius; it
/// is also what makes small steps contract at all.
pub fn build_m(alpha: f64, c: &Constants, rho: f64) -> Result<Matrix3<f64>, DiagnosticsError> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(DiagnosticsError::InvalidAlpha(alpha));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(DiagnosticsError::RhoOutOfRange(rho));
    }
    let (mu, l1, l2, l3) = (c.mu, c.l1, c.l2, c.l3);
    let grow = 1.0 + l3;
    #[rustfmt::skip]
    let x = Matrix3::new(
        1.0, 0.0,      0.0,
        0.0, rho,      0.0,
        0.0, 2.0 * l2, rho,
    );
    #[rustfmt::skip]
    let e = Matrix3::new(
        -mu,                    l1,                l3,
        l1 * l2 * grow,         l1 * l3,           l3 * l3,
        l1 * l2 * grow * grow,  l1 * l2 * grow,    l2 * l3 * grow,
    );
    Ok(x + alpha * e)
}

/// Largest eigenvalue modulus of a 3x3 matrix, via the dense eigenvalue
/// solver on the matrix directly.
pub fn spectral_radius(m: &Matrix3<f64>) -> f64 {
    let max_sq = m.complex_eigenvalues().iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    ComplexField::sqrt(max_sq)
}

/// Evaluates the spectral radius of the comparison matrix over a grid of
/// step sizes, returning `(alpha, radius)` pairs in input order.
pub fn rate_check(c: &Constants, rho: f64, alphas: &[f64]) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        out.push((alpha, spectral_radius(&build_m(alpha, c, rho)?)));
    }
    Ok(out)
}

/// An empirical contraction factor fitted from a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Per-iteration factor `exp(slope)` of the least-squares line through
    /// `log err_x`; below 1 for a contracting run.
    pub empirical_q: f64,
    /// Squared correlation of the fit; near 1 when decay is cleanly linear
    /// in log scale.
    pub fit_r2: f64,
    /// First and last iteration actually used.
    pub window: (usize, usize),
    /// Number of points behind the fit.
    pub used_points: usize,
}

/// Fits `log err_x ~ a + k log q` by least squares over the usable part of
/// a trace.
///
/// `window` restricts to iterations `start <= k < end`; by default the
/// first tenth of the run is dropped (transient) along with everything at
/// or below [`FIT_FLOOR`] (floating-point noise). Needs the optimality-gap
/// column, [`MIN_FIT_POINTS`] usable points, and a negative slope.
pub fn fit_linear_rate(rows: &[TraceRow], window: Option<(usize, usize)>) -> Result<RateFit, DiagnosticsError> {
    if rows.iter().all(|r| r.err_x.is_none()) {
        return Err(DiagnosticsError::MissingOptimalityGap);
    }
    let last_k = rows.last().map_or(0, |r| r.k);
    let (start, end) = window.unwrap_or((last_k / 10, usize::MAX));
    let points: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.k >= start && r.k < end)
        .filter_map(|r| r.err_x.map(|e| (r.k, e)))
        .filter(|(_, e)| *e > FIT_FLOOR)
        .map(|(k, e)| (k, ComplexField::ln(e)))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(DiagnosticsError::InsufficientData { usable: points.len(), needed: MIN_FIT_POINTS });
    }
    let n = points.len() as f64;
    let k_mean = points.iter().map(|(k, _)| *k as f64).sum::<f64>() / n;
    let y_mean = points.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (k, y) in &points {
        let dk = *k as f64 - k_mean;
        let dy = y - y_mean;
        sxx += dk * dk;
        sxy += dk * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let empirical_q = ComplexField::exp(slope);
    if slope >= 0.0 {
        return Err(DiagnosticsError::NonContracting { empirical_q });
    }
    let fit_r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 0.0 };
    Ok(RateFit {
        empirical_q,
        fit_r2,
        window: (points[0].0, points[points.len() - 1].0),
        used_points: points.len(),
    })
}

/// Predicted and observed convergence behavior of one run, side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub alpha: f64,
    /// Closed-form threshold under which contraction is certified.
    pub alpha_s: f64,
    /// Spectral radius of the comparison matrix at `alpha`.
    pub rho_m: f64,
    /// Fitted per-iteration factor from the trace.
    pub empirical_q: f64,
    /// Iteration range behind the fit.
    pub fit_window: (usize, usize),
    pub fit_r2: f64,
}

impl RateReport {
    /// Header matching [`RateReport::csv_row`].
    pub const CSV_HEADER: &'static str = "alpha,alpha_s,rho_M,empirical_q,fit_r2";

    /// Combines the closed-form pieces with an empirical fit of the trace.
    pub fn assemble(c: &Constants, rho: f64, alpha: f64, trace: &Trace) -> Result<Self, DiagnosticsError> {
        let bound = max_stepsize(c, rho)?;
        let rho_m = spectral_radius(&build_m(alpha, c, rho)?);
        let fit = fit_linear_rate(trace.rows(), None)?;
        Ok(Self {
            alpha,
            alpha_s: bound.alpha_s,
            rho_m,
            empirical_q: fit.empirical_q,
            fit_window: fit.window,
            fit_r2: fit.fit_r2,
        })
    }

    /// One CSV row matching [`RateReport::CSV_HEADER`].
    pub fn csv_row(&self) -> String {
        alloc::format!("{},{},{},{},{}", self.alpha, self.alpha_s, self.rho_m, self.empirical_q, self.fit_r2)
    }
}

impl core::fmt::Display for RateReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(f, "alpha        {}", self.alpha)?;
        writeln!(f, "alpha_s      {}", self.alpha_s)?;
        writeln!(f, "rho_M        {}", self.rho_m)?;
        writeln!(f, "empirical_q  {}", self.empirical_q)?;
        writeln!(f, "fit_window   {}..={}", self.fit_window.0, self.fit_window.1)?;
        write!(f, "fit_r2       {}", self.fit_r2)
    }
}

/// Worst-case conservation violations over a whole recorded run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingAudit {
    /// Largest `|mean_i sigma_i - mean_i phi_i(x_i)|` over all iterations.
    pub max_sigma_dev: f64,
    /// Largest `|mean_i y_i - mean_i grad_sigma f_i(x_i, sigma_i)|`.
    pub max_y_dev: f64,
}

impl TrackingAudit {
    pub fn within(&self, tol: f64) -> bool {
        self.max_sigma_dev <= tol && self.max_y_dev <= tol
    }
}

/// Conservation deviations of a single state: distance between the tracker
/// means and the quantities they are supposed to track. Both are exactly
/// zero at initialization and stay at rounding-error scale under doubly
/// stochastic mixing; a merely row-stochastic matrix breaks the identity
/// visibly within a few rounds.
pub fn state_tracking_deviation(s: &SwarmState, p: &ProblemSpec) -> Result<(f64, f64), DiagnosticsError> {
    if s.n_agents() != p.n_agents() {
        return Err(DiagnosticsError::AgentCountMismatch { state: s.n_agents(), problem: p.n_agents() });
    }
    let n = p.n_agents();
    let d = p.agg_dim();
    let mut sigma_mean = DVector::zeros(d);
    let mut phi_mean = DVector::zeros(d);
    let mut y_mean = DVector::zeros(d);
    let mut grad_mean = DVector::zeros(d);
    for i in 0..n {
        let agent = p.agent(i);
        sigma_mean += s.sigma(i);
        phi_mean += agent.phi(s.x(i));
        y_mean += s.y(i);
        grad_mean += agent.grad_sigma(s.x(i), s.sigma(i));
    }
    let scale = 1.0 / n as f64;
    let sigma_dev = (sigma_mean * scale - phi_mean * scale).norm();
    let y_dev = (y_mean * scale - grad_mean * scale).norm();
    Ok((sigma_dev, y_dev))
}

/// Maximum conservation deviations over every recorded state of a run.
pub fn tracking_audit(trace: &Trace, p: &ProblemSpec) -> Result<TrackingAudit, DiagnosticsError> {
    let states = trace.states().ok_or(DiagnosticsError::StatesNotRecorded)?;
    let mut max_sigma_dev: f64 = 0.0;
    let mut max_y_dev: f64 = 0.0;
    for s in states {
        let (sd, yd) = state_tracking_deviation(s, p)?;
        max_sigma_dev = max_sigma_dev.max(sd);
        max_y_dev = max_y_dev.max(yd);
    }
    Ok(TrackingAudit { max_sigma_dev, max_y_dev })
}
