//! Communication weight matrices for synchronous multi-agent mixing.
//!
//! Agents exchange tracker values over a directed graph. The mixing step is
//! a left-multiplication by a weight matrix `A`: agent `i` replaces its
//! tracker with `sum_j a_ij * (tracker of j)`, so `a_ij > 0` exactly when
//! `i` receives from `j`. Everything downstream (tracker conservation,
//! consensus contraction, the step-size bound) requires `A` to be doubly
//! stochastic and its graph to be strongly connected, so those two facts are
//! enforced at construction: a [`WeightMatrix`] cannot exist in an invalid
//! state.
//!
//! The consensus contraction factor is the spectral gap `rho = ||A - J||`
//! (operator norm, `J = (1/N) * ones`), which is strictly below 1 for every
//! valid matrix.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

/// Row/column sums may deviate from 1 by at most this much.
///
/// The built-in constructions are exact up to a handful of roundings, so the
/// tolerance only absorbs float error, never modeling slack.
pub const STOCHASTICITY_TOL: f64 = 1e-12;

/// Errors from weight-matrix construction and parsing.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("a weight matrix needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("self-weight parameter must lie strictly inside (0, 1), got {0}")]
    SelfWeightOutOfRange(f64),
    #[error("explicit entries required for kind=explicit and forbidden otherwise")]
    ExplicitEntriesMismatch,
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry ({i},{j}) = {value} is outside [0, 1]")]
    EntryOutOfRange { i: usize, j: usize, value: f64 },
    #[error("matrix is not doubly stochastic or not strongly connected: {0}")]
    Invalid(ValidationReport),
    #[error("topology text: {0}")]
    Parse(String),
}

/// Named topology families plus an escape hatch for explicit matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// Every agent hears every agent; uniform weights `1/N`.
    Complete,
    /// Each agent keeps `1 - lambda` of its own value and takes `lambda`
    /// from its predecessor on a directed cycle.
    DirectedRing,
    /// Undirected cycle with Metropolis-Hastings weights.
    UndirectedRing,
    /// Undirected star centered on agent 0, Metropolis-Hastings weights.
    Star,
    /// Undirected chain `0 - 1 - ... - N-1`, Metropolis-Hastings weights.
    Path,
    /// Caller-supplied matrix, validated on construction.
    Explicit,
}

/// A topology request: family, size, and family-specific parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub n_agents: usize,
    /// Neighbor weight for [`TopologyKind::DirectedRing`]; must be in (0, 1).
    pub self_weight_parameter: Option<f64>,
    /// Full matrix for [`TopologyKind::Explicit`] only.
    pub explicit_entries: Option<DMatrix<f64>>,
}

impl TopologySpec {
    pub fn complete(n_agents: usize) -> Self {
        Self { kind: TopologyKind::Complete, n_agents, self_weight_parameter: None, explicit_entries: None }
    }

    pub fn directed_ring(n_agents: usize, lambda: f64) -> Self {
        Self {
            kind: TopologyKind::DirectedRing,
            n_agents,
            self_weight_parameter: Some(lambda),
            explicit_entries: None,
        }
    }

    pub fn undirected_ring(n_agents: usize) -> Self {
        Self { kind: TopologyKind::UndirectedRing, n_agents, self_weight_parameter: None, explicit_entries: None }
    }

    pub fn star(n_agents: usize) -> Self {
        Self { kind: TopologyKind::Star, n_agents, self_weight_parameter: None, explicit_entries: None }
    }

    pub fn path(n_agents: usize) -> Self {
        Self { kind: TopologyKind::Path, n_agents, self_weight_parameter: None, explicit_entries: None }
    }

    pub fn explicit(entries: DMatrix<f64>) -> Self {
        Self {
            kind: TopologyKind::Explicit,
            n_agents: entries.nrows(),
            self_weight_parameter: None,
            explicit_entries: Some(entries),
        }
    }

    fn check(&self) -> Result<(), GraphError> {
        if self.n_agents < 2 {
            return Err(GraphError::TooFewAgents(self.n_agents));
        }
        if self.explicit_entries.is_some() != (self.kind == TopologyKind::Explicit) {
            return Err(GraphError::ExplicitEntriesMismatch);
        }
        if self.kind == TopologyKind::DirectedRing {
            let lambda = self.self_weight_parameter.unwrap_or(f64::NAN);
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(GraphError::SelfWeightOutOfRange(lambda));
            }
        }
        Ok(())
    }
}

/// Outcome of the three structural checks on a candidate matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationReport {
    pub row_stochastic: bool,
    pub column_stochastic: bool,
    pub strongly_connected: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.row_stochastic && self.column_stochastic && self.strongly_connected
    }
}

impl core::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "row_stochastic={} column_stochastic={} strongly_connected={}",
            self.row_stochastic, self.column_stochastic, self.strongly_connected
        )
    }
}

/// A validated communication matrix.
///
/// Invariants, guaranteed by construction: all entries lie in `[0, 1]`,
/// every row and every column sums to 1 within [`STOCHASTICITY_TOL`], and
/// the digraph of nonzero off-diagonal entries is strongly connected.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n_agents: usize,
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    /// Validates a candidate matrix and wraps it. Rejects anything that is
    /// not square, has entries outside `[0, 1]`, fails double stochasticity,
    /// or whose graph is not strongly connected.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, GraphError> {
        if entries.nrows() != entries.ncols() {
            return Err(GraphError::NotSquare { rows: entries.nrows(), cols: entries.ncols() });
        }
        if entries.nrows() < 2 {
            return Err(GraphError::TooFewAgents(entries.nrows()));
        }
        for i in 0..entries.nrows() {
            for j in 0..entries.ncols() {
                let v = entries[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(GraphError::EntryOutOfRange { i, j, value: v });
                }
            }
        }
        let report = validate(&entries);
        if !report.is_valid() {
            return Err(GraphError::Invalid(report));
        }
        Ok(Self { n_agents: entries.nrows(), entries })
    }

    /// Wraps a matrix without any validation, so tests can observe what
    /// breaks when the stochasticity invariants do not hold.
    #[cfg(test)]
    pub(crate) fn new_unchecked(entries: DMatrix<f64>) -> Self {
        Self { n_agents: entries.nrows(), entries }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Weight agent `i` applies to agent `j`'s message.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }
}

/// Runs the stochasticity and connectivity checks on a raw candidate.
///
/// Report-only: callers that need a guaranteed-good matrix should go through
/// [`WeightMatrix::new`]. Row/column sums are compared to 1 within
/// [`STOCHASTICITY_TOL`]; connectivity is decided by exact reachability over
/// the nonzero pattern, no tolerance involved.
pub fn validate(entries: &DMatrix<f64>) -> ValidationReport {
    let n = entries.nrows();
    let mut row_stochastic = entries.ncols() == n;
    let mut column_stochastic = entries.ncols() == n;
    if entries.ncols() == n {
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| entries[(i, j)]).sum();
            if (row_sum - 1.0).abs() > STOCHASTICITY_TOL {
                row_stochastic = false;
            }
            let col_sum: f64 = (0..n).map(|j| entries[(j, i)]).sum();
            if (col_sum - 1.0).abs() > STOCHASTICITY_TOL {
                column_stochastic = false;
            }
        }
    }
    ValidationReport {
        row_stochastic,
        column_stochastic,
        strongly_connected: entries.ncols() == n && strongly_connected(entries),
    }
}

/// Two-pass reachability: the digraph is strongly connected iff node 0
/// reaches every node along edges and also along reversed edges.
fn strongly_connected(entries: &DMatrix<f64>) -> bool {
    let n = entries.nrows();
    if n == 0 {
        return false;
    }
    // Edge j -> i whenever a_ij > 0, i != j. For the boolean test the naming
    // of directions is immaterial as long as the two passes are opposite.
    let forward = |from: usize, to: usize| entries[(to, from)] > 0.0;
    let backward = |from: usize, to: usize| entries[(from, to)] > 0.0;
    reaches_all(n, forward) && reaches_all(n, backward)
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        // The index is the node id; an iterator over `seen` would hide that.
        #[allow(clippy::needless_range_loop)]
        for v in 0..n {
            if u != v && !seen[v] && edge(u, v) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Builds the weight matrix for a topology request.
///
/// Construction rules: `complete` is uniform `1/N`; `directed-ring(lambda)`
/// puts `1 - lambda` on the diagonal and `lambda` on the predecessor;
/// undirected families use Metropolis-Hastings weights
/// `a_ij = 1 / (1 + max(deg_i, deg_j))` on edges with the remainder on the
/// diagonal; `explicit` passes the caller's matrix through full validation.
pub fn build_weights(spec: &TopologySpec) -> Result<WeightMatrix, GraphError> {
    spec.check()?;
    let n = spec.n_agents;
    let entries = match spec.kind {
        TopologyKind::Complete => DMatrix::from_element(n, n, 1.0 / n as f64),
        TopologyKind::DirectedRing => {
            let lambda = self_weight(spec)?;
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                m[(i, i)] = 1.0 - lambda;
                m[(i, (i + n - 1) % n)] = lambda;
            }
            m
        }
        TopologyKind::UndirectedRing => {
            let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            // N = 2 degenerates to a single edge; dedup avoids counting it twice.
            let mut edges = edges;
            edges.retain(|&(a, b)| a < b || n > 2);
            metropolis(n, &edges)
        }
        TopologyKind::Star => {
            let edges: Vec<(usize, usize)> = (1..n).map(|i| (0, i)).collect();
            metropolis(n, &edges)
        }
        TopologyKind::Path => {
            let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
            metropolis(n, &edges)
        }
        TopologyKind::Explicit => spec.explicit_entries.clone().expect("checked in spec.check"),
    };
    WeightMatrix::new(entries)
}

fn self_weight(spec: &TopologySpec) -> Result<f64, GraphError> {
    match spec.self_weight_parameter {
        Some(lambda) if lambda > 0.0 && lambda < 1.0 => Ok(lambda),
        other => Err(GraphError::SelfWeightOutOfRange(other.unwrap_or(f64::NAN))),
    }
}

/// Metropolis-Hastings weights on an undirected edge list: symmetric, hence
/// doubly stochastic, with every agent computing its row from local degrees.
fn metropolis(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut degree = vec![0usize; n];
    for &(a, b) in edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut m = DMatrix::zeros(n, n);
    for &(a, b) in edges {
        let w = 1.0 / (1 + degree[a].max(degree[b])) as f64;
        m[(a, b)] = w;
        m[(b, a)] = w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = 1.0 - off;
    }
    m
}

/// Spectral gap `rho = ||A - J||`, the largest singular value of `A - J`
/// with `J = (1/N) * ones`.
///
/// This is the contraction factor of one mixing round on the disagreement
/// subspace: `||A v - J v|| <= rho * ||v - J v||` for every `v`. Validity of
/// the input (enforced by [`WeightMatrix`]) guarantees `rho < 1`.
pub fn spectral_gap(w: &WeightMatrix) -> f64 {
    let n = w.n_agents();
    let j = 1.0 / n as f64;
    let diff = DMatrix::from_fn(n, n, |r, c| w.entries[(r, c)] - j);
    // Full SVD is cheap at these sizes and accurate to machine precision.
    diff.singular_values()[0]
}

/// Parses topology text.
///
/// Two shapes are accepted. Key=value lines (`kind=directed-ring`, `n=5`,
/// `lambda=0.5`) select a named family; lines of whitespace-separated
/// numbers, one row per line, define an explicit matrix. Blank lines and
/// `#` comments are ignored.
pub fn parse_topology(text: &str) -> Result<TopologySpec, GraphError> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lines.is_empty() {
        return Err(GraphError::Parse("empty topology text".into()));
    }
    if lines[0].contains('=') {
        parse_keyed(&lines)
    } else {
        parse_matrix(&lines)
    }
}

fn parse_keyed(lines: &[&str]) -> Result<TopologySpec, GraphError> {
    let mut kind: Option<&str> = None;
    let mut n: Option<usize> = None;
    let mut lambda: Option<f64> = None;
    for line in lines {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| GraphError::Parse(alloc::format!("expected key=value, got {line:?}")))?;
        match key.trim() {
            "kind" => kind = Some(value.trim()),
            "n" | "n_agents" => {
                n = Some(value.trim().parse().map_err(|_| {
                    GraphError::Parse(alloc::format!("bad agent count {:?}", value.trim()))
                })?);
            }
            "lambda" => {
                lambda = Some(value.trim().parse().map_err(|_| {
                    GraphError::Parse(alloc::format!("bad lambda {:?}", value.trim()))
                })?);
            }
            other => return Err(GraphError::Parse(alloc::format!("unknown key {other:?}"))),
        }
    }
    let kind = kind.ok_or_else(|| GraphError::Parse("missing kind=".into()))?;
    let n = n.ok_or_else(|| GraphError::Parse("missing n=".into()))?;
    let spec = match kind {
        "complete" => TopologySpec::complete(n),
        "directed-ring" => TopologySpec::directed_ring(
            n,
            lambda.ok_or_else(|| GraphError::Parse("directed-ring needs lambda=".into()))?,
        ),
        "undirected-ring" => TopologySpec::undirected_ring(n),
        "star" => TopologySpec::star(n),
        "path" => TopologySpec::path(n),
        other => return Err(GraphError::Parse(alloc::format!("unknown kind {other:?}"))),
    };
    Ok(spec)
}

fn parse_matrix(lines: &[&str]) -> Result<TopologySpec, GraphError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|_| GraphError::Parse(alloc::format!("bad matrix row {line:?}")))?;
        rows.push(row);
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(GraphError::Parse("explicit matrix must be square".into()));
    }
    let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(TopologySpec::explicit(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn j_matrix(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, n, 1.0 / n as f64)
    }

    #[test]
    fn complete_three_agents_is_uniform() {
        let w = build_weights(&TopologySpec::complete(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(w.weight(i, j), 1.0 / 3.0);
            }
        }
    }

    #[test]
    fn directed_ring_half_weights() {
        let w = build_weights(&TopologySpec::directed_ring(5, 0.5)).unwrap();
        for i in 0..5 {
            assert_eq!(w.weight(i, i), 0.5);
            assert_eq!(w.weight(i, (i + 4) % 5), 0.5);
        }
        assert!(validate(w.entries()).is_valid());
    }

    #[test]
    fn explicit_row_sum_short_of_one_is_rejected() {
        let m = DMatrix::from_row_slice(3, 3, &[0.4, 0.5, 0.0, 0.3, 0.3, 0.4, 0.3, 0.1, 0.6]);
        let err = build_weights(&TopologySpec::explicit(m)).unwrap_err();
        match err {
            GraphError::Invalid(report) => assert!(!report.row_stochastic),
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn identity_is_disconnected() {
        let report = validate(&DMatrix::identity(3, 3));
        assert!(report.row_stochastic);
        assert!(report.column_stochastic);
        assert!(!report.strongly_connected);
    }

    #[test]
    fn complete_uniform_validates() {
        let report = validate(&j_matrix(4));
        assert!(report.is_valid());
    }

    #[test]
    fn directed_three_cycle_validates() {
        let m = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5]);
        assert!(validate(&m).is_valid());
    }

    #[test]
    fn one_way_chain_is_not_strongly_connected() {
        // Row-stochastic only; 0 never hears from 2.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
        let report = validate(&m);
        assert!(!report.strongly_connected);
        assert!(!report.column_stochastic);
    }

    #[test]
    fn complete_gap_is_zero() {
        let w = build_weights(&TopologySpec::complete(5)).unwrap();
        assert_eq!(spectral_gap(&w), 0.0);
    }

    #[test]
    fn directed_ring_gap_matches_circulant_formula() {
        // Eigenvalues of the circulant are 0.5 + 0.5 * exp(2 pi i k / 5);
        // the largest nonunit modulus is cos(pi / 5). The matrix is normal,
        // so singular values of A - J equal those moduli.
        let w = build_weights(&TopologySpec::directed_ring(5, 0.5)).unwrap();
        let expected = (core::f64::consts::PI / 5.0).cos();
        assert!((spectral_gap(&w) - expected).abs() < 1e-12);
        assert!((spectral_gap(&w) - 0.8090).abs() < 1e-4);
    }

    #[test]
    fn undirected_ring_gap_inside_unit_interval() {
        let w = build_weights(&TopologySpec::undirected_ring(4)).unwrap();
        let rho = spectral_gap(&w);
        assert!(rho > 0.0 && rho < 1.0);
        // Degree-2 cycle gives 1/3 everywhere; the gap is |1/3 - 2/3| = 1/3.
        assert!((rho - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mixing_contracts_disagreement() {
        // ||A x - J x|| <= rho ||x - J x|| for every x; checked on 1000
        // random vectors per topology.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let specs = [
            TopologySpec::directed_ring(5, 0.5),
            TopologySpec::undirected_ring(6),
            TopologySpec::star(5),
            TopologySpec::path(4),
        ];
        for spec in &specs {
            let w = build_weights(spec).unwrap();
            let rho = spectral_gap(&w);
            let n = w.n_agents();
            for _ in 0..1000 {
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
                let mean = x.mean();
                let jx = DVector::from_element(n, mean);
                let ax = w.entries() * &x;
                assert!((&ax - &jx).norm() <= rho * (&x - &jx).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn mixing_preserves_the_average_projector() {
        // A J = J A = J elementwise: mixing commutes with averaging.
        for spec in [
            TopologySpec::complete(4),
            TopologySpec::directed_ring(7, 0.3),
            TopologySpec::undirected_ring(5),
            TopologySpec::star(6),
        ] {
            let w = build_weights(&spec).unwrap();
            let j = j_matrix(w.n_agents());
            let aj = w.entries() * &j;
            let ja = &j * w.entries();
            for i in 0..w.n_agents() {
                for k in 0..w.n_agents() {
                    assert!((aj[(i, k)] - j[(i, k)]).abs() < 1e-12);
                    assert!((ja[(i, k)] - j[(i, k)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn every_builtin_kind_validates_up_to_fifty_agents() {
        for n in 2..=50 {
            for spec in [
                TopologySpec::complete(n),
                TopologySpec::directed_ring(n, 0.25),
                TopologySpec::undirected_ring(n),
                TopologySpec::star(n),
                TopologySpec::path(n),
            ] {
                let w = build_weights(&spec).expect("construction should succeed");
                assert!(validate(w.entries()).is_valid(), "{spec:?} failed validation");
                assert!(spectral_gap(&w) < 1.0);
            }
        }
    }

    #[test]
    fn lambda_outside_unit_interval_is_rejected() {
        for lambda in [0.0, 1.0, -0.2, 1.7, f64::NAN] {
            let err = build_weights(&TopologySpec::directed_ring(4, lambda)).unwrap_err();
            assert!(matches!(err, GraphError::SelfWeightOutOfRange(_)));
        }
    }

    #[test]
    fn keyed_text_round_trips() {
        let spec = parse_topology("kind=directed-ring\nn=5\nlambda=0.5\n").unwrap();
        assert_eq!(spec, TopologySpec::directed_ring(5, 0.5));
        let spec = parse_topology("# comment\nkind=complete\nn=3\n").unwrap();
        assert_eq!(spec, TopologySpec::complete(3));
    }

    #[test]
    fn matrix_text_parses_as_explicit() {
        let spec = parse_topology("0.5 0.5\n0.5 0.5\n").unwrap();
        assert_eq!(spec.kind, TopologyKind::Explicit);
        let w = build_weights(&spec).unwrap();
        assert_eq!(w.weight(0, 1), 0.5);
    }

    #[test]
    fn malformed_text_is_reported() {
        assert!(matches!(parse_topology(""), Err(GraphError::Parse(_))));
        assert!(matches!(parse_topology("kind=complete\n"), Err(GraphError::Parse(_))));
        assert!(matches!(parse_topology("0.5 0.5\n0.5\n"), Err(GraphError::Parse(_))));
        assert!(matches!(parse_topology("kind=mystery\nn=3\n"), Err(GraphError::Parse(_))));
    }

    #[test]
    fn star_and_path_metropolis_rows() {
        let w = build_weights(&TopologySpec::star(4)).unwrap();
        // Center degree 3, leaves degree 1: every edge weight is 1/4.
        assert_eq!(w.weight(0, 1), 0.25);
        assert_eq!(w.weight(1, 0), 0.25);
        assert_eq!(w.weight(1, 1), 0.75);
        let w = build_weights(&TopologySpec::path(3)).unwrap();
        // End-to-middle edges: 1/(1 + max(1, 2)) = 1/3.
        assert!((w.weight(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((w.weight(1, 1) - 1.0 / 3.0).abs() < 1e-15);
    }
}
