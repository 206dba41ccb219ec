//! Small dense helpers shared by the solvers and diagnostics.
//!
//! Stacked network vectors are kept as one `DVector` per agent; the global
//! vector `col{x_1, ..., x_N}` is never materialized.

use nalgebra::{DMatrix, DVector};

/// Per-agent block vectors, row `i` belonging to agent `i`.
pub type Stacked = Vec<DVector<f64>>;

pub fn zeros(n_agents: usize, dim: usize) -> Stacked {
    vec![DVector::zeros(dim); n_agents]
}

pub fn stacked_norm_sq(x: &[DVector<f64>]) -> f64 {
    x.iter().map(|v| v.norm_squared()).sum()
}

pub fn stacked_norm(x: &[DVector<f64>]) -> f64 {
    stacked_norm_sq(x).sqrt()
}

pub fn stacked_sub(a: &[DVector<f64>], b: &[DVector<f64>]) -> Stacked {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn stacked_dist(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub fn stacked_dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Largest absolute difference between two stacked vectors.
pub fn stacked_max_abs_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

/// `(K ⊗ I_n) x` for an `N x N` matrix `K`, summing over `j` in index order.
pub fn kron_apply(k: &DMatrix<f64>, x: &[DVector<f64>]) -> Stacked {
    let n = k.nrows();
    let dim = x.first().map_or(0, |v| v.len());
    (0..n)
        .map(|i| {
            let mut acc = DVector::zeros(dim);
            for (j, xj) in x.iter().enumerate() {
                let kij = k[(i, j)];
                if kij != 0.0 {
                    acc.axpy(kij, xj, 1.0);
                }
            }
            acc
        })
        .collect()
}

/// Stack a network vector into one long column, agent blocks in order.
pub fn flatten(x: &[DVector<f64>]) -> DVector<f64> {
    let dim = x.first().map_or(0, |v| v.len());
    let mut out = DVector::zeros(x.len() * dim);
    for (i, v) in x.iter().enumerate() {
        out.rows_mut(i * dim, dim).copy_from(v);
    }
    out
}

pub fn unflatten(v: &DVector<f64>, n_agents: usize) -> Stacked {
    let dim = v.len() / n_agents.max(1);
    (0..n_agents)
        .map(|i| v.rows(i * dim, dim).into_owned())
        .collect()
}

/// Outcome of [`power_iteration`].
#[derive(Debug, Clone, Copy)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of a symmetric PSD operator given as a closure.
///
/// Stops when the Rayleigh quotient changes by less than `rel_tol` relative.
/// The start vector is a fixed deterministic pattern, so repeated calls agree.
pub fn power_iteration<F>(dim: usize, apply: F, rel_tol: f64, max_iters: usize) -> PowerEstimate
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        return PowerEstimate { value: 0.0, iterations: 0, converged: true };
    }
    let mut v = DVector::from_fn(dim, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7548776662).sin());
    v /= v.norm();
    let mut prev = 0.0;
    for it in 1..=max_iters {
        let w = apply(&v);
        let value = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return PowerEstimate { value: 0.0, iterations: it, converged: true };
        }
        v = w / wn;
        if it > 1 && (value - prev).abs() <= rel_tol * value.abs() {
            return PowerEstimate { value, iterations: it, converged: true };
        }
        prev = value;
    }
    PowerEstimate { value: prev, iterations: max_iters, converged: false }
}

/// Spectral norm squared `‖D‖² = λ_max(DᵀD)` by symmetric eigendecomposition.
pub fn spectral_norm_sq(d: &DMatrix<f64>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let gram = if d.nrows() < d.ncols() { d * d.transpose() } else { d.transpose() * d };
    gram.symmetric_eigenvalues().max().max(0.0)
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}
