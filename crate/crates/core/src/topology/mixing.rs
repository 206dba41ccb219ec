use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::Graph;
use crate::error::TopologyError;
use crate::linalg::max_asymmetry;

/// Tolerance every mixing-matrix condition is checked against.
pub const MIXING_TOL: f64 = 1e-10;

/// Singular values at or below this are treated as zero.
pub const NONZERO_SINGULAR: f64 = 1e-9;

/// Spectral data derived from a symmetric mixing matrix.
#[derive(Debug, Clone)]
pub struct Spectral {
    /// Eigenvalues of `W`, ascending.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors, column `k` pairs with `eigenvalues[k]`.
    pub eigenvectors: DMatrix<f64>,
    /// `(I + W) / 2`.
    pub w_tilde: DMatrix<f64>,
    /// Symmetric PSD square root of `I - W`.
    pub v: DMatrix<f64>,
    /// Largest singular value of `I - W`.
    pub sigma_max_i_minus_w: f64,
    /// Smallest nonzero singular value of `W`.
    pub sigma_min_w: f64,
}

impl Spectral {
    /// Smallest eigenvalue of `W`.
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Largest singular value of `V`, i.e. `sqrt(σ_M(I - W))`.
    pub fn sigma_max_v(&self) -> f64 {
        self.sigma_max_i_minus_w.sqrt()
    }
}

/// Eigendecomposition of `W` plus the derived quantities `W̃`, `V`,
/// `σ_M(I − W)` and `σ_m(W)`.
pub fn spectral_quantities(w: &DMatrix<f64>) -> Result<Spectral, TopologyError> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(TopologyError::Dimension { rows: n, cols: w.ncols(), expected: n });
    }
    let asym = max_asymmetry(w);
    if asym > MIXING_TOL {
        return Err(TopologyError::NotSymmetric(asym));
    }
    let eig = w.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

    let roots = eigenvalues.map(|l| if 1.0 - l > 1e-12 { (1.0 - l).sqrt() } else { 0.0 });
    let v = &eigenvectors * DMatrix::from_diagonal(&roots) * eigenvectors.transpose();
    let v = (&v + v.transpose()) * 0.5;
    let w_tilde = (DMatrix::identity(n, n) + w) * 0.5;

    let sigma_max_i_minus_w = eigenvalues.iter().map(|l| (1.0 - l).abs()).fold(0.0, f64::max);
    let sigma_min_w = eigenvalues
        .iter()
        .map(|l| l.abs())
        .filter(|&s| s > NONZERO_SINGULAR)
        .fold(f64::INFINITY, f64::min);
    let sigma_min_w = if sigma_min_w.is_finite() { sigma_min_w } else { 0.0 };

    Ok(Spectral { eigenvalues, eigenvectors, w_tilde, v, sigma_max_i_minus_w, sigma_min_w })
}

/// A validated symmetric doubly stochastic mixing matrix with cached spectra.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    spectral: Spectral,
    rows: Vec<Vec<(usize, f64)>>,
}

impl MixingMatrix {
    /// Wraps `w` after checking every mixing condition against `graph`.
    pub fn new(w: DMatrix<f64>, graph: &Graph) -> Result<Self, MixingInvalid> {
        let report = validate_mixing(&w, graph);
        if !report.passed() {
            return Err(MixingInvalid(report));
        }
        let spectral = spectral_quantities(&w).map_err(|e| MixingInvalid(report.with_error(e)))?;
        Ok(Self::assemble(w, spectral))
    }

    /// Wraps a symmetric matrix without a graph; support is read off `w`.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self, TopologyError> {
        let spectral = spectral_quantities(&w)?;
        Ok(Self::assemble(w, spectral))
    }

    fn assemble(w: DMatrix<f64>, spectral: Spectral) -> Self {
        let rows = (0..w.nrows())
            .map(|i| {
                (0..w.ncols())
                    .filter(|&j| w[(i, j)] != 0.0)
                    .map(|j| (j, w[(i, j)]))
                    .collect()
            })
            .collect();
        Self { w, spectral, rows }
    }

    pub fn n_agents(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn w_tilde(&self) -> &DMatrix<f64> {
        &self.spectral.w_tilde
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.spectral.v
    }

    pub fn i_minus_w(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n_agents(), self.n_agents()) - &self.w
    }

    /// Nonzero entries `(j, W_ij)` of row `i` in ascending `j`, including `j = i`.
    /// This is exactly the set of agents `i` hears from in one exchange.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `Σ_j W_ij x_j`, summed in ascending `j`.
    pub fn mix_row(&self, i: usize, x: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(x[i].len());
        for &(j, wij) in &self.rows[i] {
            acc.axpy(wij, &x[j], 1.0);
        }
        acc
    }

    /// Comma-separated matrix, 17 significant digits.
    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.w)
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Metropolis-Hastings weights: `W_ij = 1 / (1 + max(d_i, d_j))` on edges,
/// diagonal fills each row to one.
pub fn metropolis_hastings_weights(graph: &Graph) -> Result<MixingMatrix, TopologyError> {
    let components = graph.components();
    if components != 1 {
        return Err(TopologyError::Disconnected { components });
    }
    let n = graph.n_agents();
    let deg = graph.degrees();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in graph.edges() {
        let wij = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[(i, j)] = wij;
        w[(j, i)] = wij;
    }
    for i in 0..n {
        let off: f64 = graph.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    let spectral = spectral_quantities(&w)?;
    Ok(MixingMatrix::assemble(w, spectral))
}

/// One mixing condition with its measured violation.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub violation: f64,
}

/// Pass/fail per mixing condition. Failures are entries, not errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, violation: f64, passed: bool) {
        self.checks.push(Check { name, passed, violation });
    }

    fn with_error(mut self, e: TopologyError) -> Self {
        self.error = Some(e.to_string());
        self
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {:<18} violation={:.3e}", c.name, c.violation)?;
        }
        if let Some(e) = &self.error {
            writeln!(f, "FAIL error              {e}")?;
        }
        write!(f, "overall: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingInvalid(pub ValidationReport);

impl fmt::Display for MixingInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mixing matrix failed validation:\n{}", self.0)
    }
}

impl std::error::Error for MixingInvalid {}

/// Checks symmetry, double stochasticity, the graph support pattern, the
/// eigenvalue range `(-1, 1]`, and that eigenvalue 1 is simple.
pub fn validate_mixing(w: &DMatrix<f64>, graph: &Graph) -> ValidationReport {
    let tol = MIXING_TOL;
    let n = graph.n_agents();
    let mut report = ValidationReport::default();
    if w.nrows() != n || w.ncols() != n {
        report.push("dimensions", (w.nrows().abs_diff(n) + w.ncols().abs_diff(n)) as f64, false);
        return report;
    }
    report.push("dimensions", 0.0, true);

    let asym = max_asymmetry(w);
    report.push("symmetric", asym, asym <= tol);

    let row_dev = (0..n).map(|i| (w.row(i).sum() - 1.0).abs()).fold(0.0, f64::max);
    report.push("row_sums", row_dev, row_dev <= tol);
    let col_dev = (0..n).map(|j| (w.column(j).sum() - 1.0).abs()).fold(0.0, f64::max);
    report.push("column_sums", col_dev, col_dev <= tol);

    let mut off_support: f64 = 0.0;
    let mut min_support = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j || graph.has_edge(i, j) {
                min_support = min_support.min(w[(i, j)]);
            } else {
                off_support = off_support.max(w[(i, j)].abs());
            }
        }
    }
    report.push("zero_off_graph", off_support, off_support <= tol);
    report.push("positive_on_graph", (tol - min_support).max(0.0), min_support > tol);

    let sym = (w + w.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let max_eig = eig.max();
    let min_eig = eig.min();
    let range_violation = (max_eig - 1.0).max(-1.0 - min_eig).max(0.0);
    report.push("eigen_range", range_violation, max_eig <= 1.0 + tol && min_eig > -1.0 + tol);

    let unit = eig.iter().filter(|&&l| (l - 1.0).abs() <= tol).count();
    report.push("null_space_ones", unit.abs_diff(1) as f64, unit == 1);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::generate_random_connected_graph;

    fn two_by_two() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])
    }

    #[test]
    fn mh_on_two_node_path() {
        let g = Graph::path(2).unwrap();
        let m = metropolis_hastings_weights(&g).unwrap();
        assert_eq!(m.w(), &two_by_two());
    }

    #[test]
    fn mh_on_three_node_star() {
        let g = Graph::star(3, 0).unwrap();
        let m = metropolis_hastings_weights(&g).unwrap();
        let w = m.w();
        // center degree 2, leaves degree 1: W_{c,leaf} = 1/(1+2)
        assert!((w[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[(0, 2)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[(1, 1)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[(2, 2)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[(1, 2)], 0.0);
    }

    #[test]
    fn mh_is_doubly_stochastic() {
        for seed in 0..10 {
            let g = generate_random_connected_graph(15, 0.25, seed).unwrap();
            let m = metropolis_hastings_weights(&g).unwrap();
            for i in 0..15 {
                assert!((m.w().row(i).sum() - 1.0).abs() < 1e-12);
                assert!((m.w().column(i).sum() - 1.0).abs() < 1e-12);
            }
            let report = validate_mixing(m.w(), &g);
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn mh_rejects_disconnected() {
        let g = Graph::new(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(
            metropolis_hastings_weights(&g).unwrap_err(),
            TopologyError::Disconnected { components: 2 }
        );
    }

    #[test]
    fn identity_fails_null_space() {
        let g = Graph::path(2).unwrap();
        let report = validate_mixing(&DMatrix::identity(2, 2), &g);
        assert!(!report.passed());
        assert!(!report.check("null_space_ones").unwrap().passed);
        assert!(report.check("row_sums").unwrap().passed);
    }

    #[test]
    fn scaled_row_fails_row_sum() {
        let g = generate_random_connected_graph(6, 0.5, 3).unwrap();
        let mut w = metropolis_hastings_weights(&g).unwrap().w().clone();
        w.row_mut(2).scale_mut(0.9);
        let report = validate_mixing(&w, &g);
        let rows = report.check("row_sums").unwrap();
        assert!(!rows.passed);
        assert!((rows.violation - 0.1).abs() < 1e-12);
        assert!(MixingMatrix::new(w, &g).is_err());
    }

    #[test]
    fn spectral_two_by_two() {
        let s = spectral_quantities(&two_by_two()).unwrap();
        assert!((s.eigenvalues[0]).abs() < 1e-15);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-15);
        assert!((s.sigma_max_i_minus_w - 1.0).abs() < 1e-15);
        // I - W has eigenvalues 0 and 1, so its square root is itself.
        let i_minus_w = DMatrix::identity(2, 2) - two_by_two();
        assert!((&s.v - &i_minus_w).amax() < 1e-15);
        let expected = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert!((&s.w_tilde - expected).amax() < 1e-15);
        assert!((s.sigma_min_w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn v_squares_to_i_minus_w() {
        let g = generate_random_connected_graph(20, 0.15, 11).unwrap();
        let m = metropolis_hastings_weights(&g).unwrap();
        let v2 = m.v() * m.v();
        assert!((v2 - m.i_minus_w()).amax() < 1e-10);
        assert!(m.spectral().sigma_max_i_minus_w < 2.0);
    }

    #[test]
    fn spectral_rejects_asymmetric() {
        let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.4, 0.6]);
        assert!(matches!(spectral_quantities(&w), Err(TopologyError::NotSymmetric(_))));
    }

    #[test]
    fn mix_row_uses_support() {
        let g = Graph::path(3).unwrap();
        let m = metropolis_hastings_weights(&g).unwrap();
        assert_eq!(m.row(0).iter().map(|e| e.0).collect::<Vec<_>>(), vec![0, 1]);
        let x: Vec<_> = (0..3).map(|i| DVector::from_element(1, i as f64)).collect();
        let mixed = m.mix_row(1, &x);
        let dense = (m.w() * DVector::from_vec(vec![0.0, 1.0, 2.0]))[1];
        assert!((mixed[0] - dense).abs() < 1e-15);
    }
}
