use nalgebra::{DMatrix, DVector};

use crate::error::DiagnosticsError;
use crate::linalg::kron_apply;
use crate::solvers::StepSizes;
use crate::topology::MixingMatrix;

/// Eigenvalues at or below this count as "not positive".
pub const PD_TOL: f64 = 0.0;

/// Metric matrices in factored form. With `Γ = diag(τ) ⊗ I` and `V ⊗ I`,
/// every block is an `N x N` matrix acting on agent rows:
///
/// ```text
/// H  = diag(Γ⁻¹, I/β)
/// G  = diag(Γ⁻¹, I/β − VΓV)
/// Ĥ₁ = G − ½ diag(L_F, 0)
/// Ĥ₂ = G − diag(L_F, 0)
/// ```
#[derive(Debug, Clone)]
pub struct MetricMatrices {
    pub tau: Vec<f64>,
    pub beta: f64,
    pub lipschitz: Vec<f64>,
    pub v: DMatrix<f64>,
    /// `I/β − V diag(τ) V`.
    pub g_dual: DMatrix<f64>,
    pub min_eig_h: f64,
    pub min_eig_g: f64,
    pub min_eig_h1: f64,
    pub min_eig_h2: f64,
    pub h_pd: bool,
    pub g_pd: bool,
    pub h1_pd: bool,
    pub h2_pd: bool,
    /// `σ_M(H)^{1/2}`.
    pub c1: f64,
    /// `σ_m(Ĥ₁)^{1/2}` (0 when `Ĥ₁` is not PD).
    pub c2: f64,
    /// `√N σ_M(H^{1/2}M) σ_M(Γ) (β σ_M(V) + 1)`.
    pub mu_bar: f64,
}

pub fn build_metric_matrices(sizes: &StepSizes, mixing: &MixingMatrix, lipschitz: &[f64]) -> MetricMatrices {
    build_from_v(sizes, mixing.v(), mixing.spectral().sigma_max_v(), lipschitz)
}

/// Same as [`build_metric_matrices`] from an explicit `V` and `σ_M(V)`.
pub fn build_from_v(sizes: &StepSizes, v: &DMatrix<f64>, sigma_max_v: f64, lipschitz: &[f64]) -> MetricMatrices {
    let n = sizes.tau.len();
    let beta = sizes.beta;
    let gamma = DMatrix::from_diagonal(&DVector::from_column_slice(&sizes.tau));
    let g_dual = DMatrix::identity(n, n) / beta - v * &gamma * v;
    let g_dual = (&g_dual + g_dual.transpose()) * 0.5;
    let dual_min = g_dual.clone().symmetric_eigenvalues().min();

    let inv_tau_min = sizes.tau.iter().map(|t| 1.0 / t).fold(f64::INFINITY, f64::min);
    let inv_tau_max = sizes.tau.iter().map(|t| 1.0 / t).fold(0.0, f64::max);
    let h1_primal = sizes.tau.iter().zip(lipschitz).map(|(t, l)| 1.0 / t - 0.5 * l).fold(f64::INFINITY, f64::min);
    let h2_primal = sizes.tau.iter().zip(lipschitz).map(|(t, l)| 1.0 / t - l).fold(f64::INFINITY, f64::min);

    let min_eig_h = inv_tau_min.min(1.0 / beta);
    let min_eig_g = inv_tau_min.min(dual_min);
    let min_eig_h1 = h1_primal.min(dual_min);
    let min_eig_h2 = h2_primal.min(dual_min);

    // H^{1/2} M = [[Γ^{-1/2}, Γ^{1/2} V], [0, β^{-1/2} I]]
    let mut hm = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        hm[(i, i)] = 1.0 / sizes.tau[i].sqrt();
        hm[(n + i, n + i)] = 1.0 / beta.sqrt();
        for j in 0..n {
            hm[(i, n + j)] = sizes.tau[i].sqrt() * v[(i, j)];
        }
    }
    let sigma_hm = hm.singular_values().max();
    let sigma_gamma = sizes.tau.iter().copied().fold(0.0, f64::max);
    let mu_bar = (n as f64).sqrt() * sigma_hm * sigma_gamma * (beta * sigma_max_v + 1.0);

    MetricMatrices {
        tau: sizes.tau.clone(),
        beta,
        lipschitz: lipschitz.to_vec(),
        v: v.clone(),
        g_dual,
        min_eig_h,
        min_eig_g,
        min_eig_h1,
        min_eig_h2,
        h_pd: min_eig_h > PD_TOL,
        g_pd: min_eig_g > PD_TOL,
        h1_pd: min_eig_h1 > PD_TOL,
        h2_pd: min_eig_h2 > PD_TOL,
        c1: inv_tau_max.max(1.0 / beta).sqrt(),
        c2: min_eig_h1.max(0.0).sqrt(),
        mu_bar,
    }
}

fn weighted_primal(x: &[DVector<f64>], w: impl Fn(usize) -> f64) -> f64 {
    x.iter().enumerate().map(|(i, xi)| w(i) * xi.norm_squared()).sum()
}

/// `‖α‖²/β − ⟨α, VΓVα⟩`.
fn g_dual_form(mm: &MetricMatrices, alpha: &[DVector<f64>]) -> f64 {
    let va = kron_apply(&mm.v, alpha);
    let gva: f64 = va.iter().zip(&mm.tau).map(|(z, t)| t * z.norm_squared()).sum();
    alpha.iter().map(|a| a.norm_squared()).sum::<f64>() / mm.beta - gva
}

/// `‖u‖²_H = ‖x‖²_{Γ⁻¹} + ‖α‖²/β`.
pub fn h_norm_sq(x: &[DVector<f64>], alpha: &[DVector<f64>], mm: &MetricMatrices) -> f64 {
    weighted_primal(x, |i| 1.0 / mm.tau[i]) + alpha.iter().map(|a| a.norm_squared()).sum::<f64>() / mm.beta
}

pub fn g_norm_sq(x: &[DVector<f64>], alpha: &[DVector<f64>], mm: &MetricMatrices) -> Result<f64, DiagnosticsError> {
    if !mm.g_pd {
        return Err(DiagnosticsError::NotPositiveDefinite("G"));
    }
    Ok(weighted_primal(x, |i| 1.0 / mm.tau[i]) + g_dual_form(mm, alpha))
}

pub fn h1_norm_sq(x: &[DVector<f64>], alpha: &[DVector<f64>], mm: &MetricMatrices) -> Result<f64, DiagnosticsError> {
    if !mm.h1_pd {
        return Err(DiagnosticsError::NotPositiveDefinite("H1"));
    }
    Ok(weighted_primal(x, |i| 1.0 / mm.tau[i] - 0.5 * mm.lipschitz[i]) + g_dual_form(mm, alpha))
}

pub fn h2_norm_sq(x: &[DVector<f64>], alpha: &[DVector<f64>], mm: &MetricMatrices) -> Result<f64, DiagnosticsError> {
    if !mm.h2_pd {
        return Err(DiagnosticsError::NotPositiveDefinite("H2"));
    }
    Ok(weighted_primal(x, |i| 1.0 / mm.tau[i] - mm.lipschitz[i]) + g_dual_form(mm, alpha))
}

/// `‖u − u_ref‖_H` without building `MetricMatrices`.
pub fn h_distance(
    x: &[DVector<f64>],
    alpha: &[DVector<f64>],
    x_ref: &[DVector<f64>],
    alpha_ref: &[DVector<f64>],
    tau: &[f64],
    beta: f64,
) -> f64 {
    let px: f64 = x.iter().zip(x_ref).zip(tau).map(|((a, b), t)| (a - b).norm_squared() / t).sum();
    let pa: f64 = alpha.iter().zip(alpha_ref).map(|(a, b)| (a - b).norm_squared()).sum();
    (px + pa / beta).sqrt()
}

/// Dense `2Nn x 2Nn` versions of `Q`, `M`, `H = QM⁻¹` and `G = Qᵀ + Q − MᵀHM`.
/// Only meant for tiny instances.
pub struct DenseMetric {
    pub q: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

pub fn dense_metric(sizes: &StepSizes, v: &DMatrix<f64>, dim: usize) -> DenseMetric {
    let n = sizes.tau.len();
    let nn = n * dim;
    let id = DMatrix::<f64>::identity(dim, dim);
    let vk = v.kronecker(&id);
    let gamma = DMatrix::from_diagonal(&DVector::from_column_slice(&sizes.tau)).kronecker(&id);
    let gamma_inv = gamma.map(|g| if g != 0.0 { 1.0 / g } else { 0.0 });
    let eye = DMatrix::<f64>::identity(nn, nn);

    let mut q = DMatrix::zeros(2 * nn, 2 * nn);
    q.view_mut((0, 0), (nn, nn)).copy_from(&gamma_inv);
    q.view_mut((0, nn), (nn, nn)).copy_from(&vk);
    q.view_mut((nn, nn), (nn, nn)).copy_from(&(&eye / sizes.beta));
    let mut m = DMatrix::identity(2 * nn, 2 * nn);
    m.view_mut((0, nn), (nn, nn)).copy_from(&(&gamma * &vk));

    let m_inv = m.clone().try_inverse().expect("M is unit upper triangular");
    let h = &q * m_inv;
    let g = q.transpose() + &q - m.transpose() * &h * &m;
    DenseMetric { q, m, h, g }
}
