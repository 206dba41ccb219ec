//! Regularizers and their proximal mappings.
//!
//! Every mapping reports a bound on the residual `d` in
//! `d ∈ ∂g(x̃) + (x̃ − s)/τ`, in the same units as `∂g`. Closed forms report 0.

use nalgebra::{DMatrix, DVector};

use crate::error::ProxError;
use crate::inner::{cv_prox_solve_warm, CvSettings};
use crate::linalg::spectral_norm_sq;

/// Below this magnitude a coordinate (or `(Dx)_j`) is treated as sitting on a kink.
pub const KINK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `ν‖x‖₁`
    L1 { weight: f64 },
    /// `ν‖x‖₂`
    L2Norm { weight: f64 },
    /// `ν‖Dx‖₁`; `d_norm_sq` caches `‖DᵀD‖`.
    GeneralizedLasso { weight: f64, d: DMatrix<f64>, d_norm_sq: f64 },
}

impl Regularizer {
    pub fn l1(weight: f64) -> Result<Self, ProxError> {
        check_weight(weight)?;
        Ok(Self::L1 { weight })
    }

    pub fn l2_norm(weight: f64) -> Result<Self, ProxError> {
        check_weight(weight)?;
        Ok(Self::L2Norm { weight })
    }

    pub fn generalized_lasso(weight: f64, d: DMatrix<f64>) -> Result<Self, ProxError> {
        check_weight(weight)?;
        let d_norm_sq = spectral_norm_sq(&d);
        Ok(Self::GeneralizedLasso { weight, d, d_norm_sq })
    }

    /// `g ≡ 0`.
    pub fn zero() -> Self {
        Self::L1 { weight: 0.0 }
    }

    pub fn weight(&self) -> f64 {
        match self {
            Self::L1 { weight } | Self::L2Norm { weight } | Self::GeneralizedLasso { weight, .. } => *weight,
        }
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self, Self::GeneralizedLasso { .. })
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::L1 { weight } => weight * x.lp_norm(1),
            Self::L2Norm { weight } => weight * x.norm(),
            Self::GeneralizedLasso { weight, d, .. } => weight * (d * x).lp_norm(1),
        }
    }

    /// `prox_{τg}(s)`. For the generalized lasso the inner solver runs with
    /// `req.tol` and the returned bound is divided by `τ`.
    pub fn prox(&self, s: &DVector<f64>, tau: f64, req: &InnerRequest<'_>) -> Result<ProxOutcome, ProxError> {
        if !(tau > 0.0) {
            return Err(ProxError::NegativeWeight(tau));
        }
        match self {
            Self::L1 { weight } => Ok(ProxOutcome::closed(prox_l1(s, tau * weight)?)),
            Self::L2Norm { weight } => Ok(ProxOutcome::closed(prox_l2norm(s, tau * weight)?)),
            Self::GeneralizedLasso { weight, d, d_norm_sq } => {
                if d.ncols() != s.len() {
                    return Err(ProxError::Dimension { expected: d.ncols(), got: s.len() });
                }
                let out = cv_prox_solve_warm(d, *d_norm_sq, s, tau * weight, req.warm_primal, req.warm_dual, req.tol, req.settings)?;
                let mut result = out.result;
                result.residual_bound /= tau;
                Ok(ProxOutcome { result, dual: Some(out.dual) })
            }
        }
    }
}

fn check_weight(weight: f64) -> Result<(), ProxError> {
    if weight >= 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(ProxError::NegativeWeight(weight))
    }
}

/// Inputs for an inexact prox call; ignored by the closed forms.
#[derive(Debug, Clone, Copy)]
pub struct InnerRequest<'a> {
    pub tol: f64,
    pub warm_primal: Option<&'a DVector<f64>>,
    pub warm_dual: Option<&'a DVector<f64>>,
    pub settings: &'a CvSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub point: DVector<f64>,
    pub residual_bound: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxOutcome {
    pub result: ProxResult,
    /// Final inner dual, kept for warm starts.
    pub dual: Option<DVector<f64>>,
}

impl ProxOutcome {
    fn closed(point: DVector<f64>) -> Self {
        Self { result: ProxResult { point, residual_bound: 0.0, inner_iterations: 0 }, dual: None }
    }
}

/// Componentwise soft threshold.
pub fn prox_l1(s: &DVector<f64>, theta: f64) -> Result<DVector<f64>, ProxError> {
    check_weight(theta)?;
    Ok(s.map(|v| v.signum() * (v.abs() - theta).max(0.0)))
}

/// Block soft threshold `(1 − θ/max(‖s‖, θ))·s`.
pub fn prox_l2norm(s: &DVector<f64>, theta: f64) -> Result<DVector<f64>, ProxError> {
    check_weight(theta)?;
    let norm = s.norm();
    if norm <= theta {
        return Ok(DVector::zeros(s.len()));
    }
    Ok(s * (1.0 - theta / norm))
}

/// Minimum-norm `d ∈ ∂g(x̃) + (x̃ − s)/τ` where `s = x − τ(∇f(x) − λ)`.
pub fn exact_residual(
    g: &Regularizer,
    x_tilde: &DVector<f64>,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    lambda: &DVector<f64>,
    tau: f64,
) -> Result<f64, ProxError> {
    let n = x_tilde.len();
    for v in [x, grad, lambda] {
        if v.len() != n {
            return Err(ProxError::Dimension { expected: n, got: v.len() });
        }
    }
    let s = x - (grad - lambda) * tau;
    subgradient_residual(g, x_tilde, &s, tau)
}

/// Distance from 0 to `∂g(x̃) + (x̃ − s)/τ`.
///
/// Exact for the closed-form kinds. For the generalized lasso the free
/// multipliers on the kink set `{j : |(Dx̃)_j| ≤ KINK_TOL}` are fitted by a
/// box-constrained least-squares solve, which can only over-estimate.
pub fn subgradient_residual(g: &Regularizer, x_tilde: &DVector<f64>, s: &DVector<f64>, tau: f64) -> Result<f64, ProxError> {
    if s.len() != x_tilde.len() {
        return Err(ProxError::Dimension { expected: x_tilde.len(), got: s.len() });
    }
    let q = (x_tilde - s) / tau;
    match g {
        Regularizer::L1 { weight } => Ok(q
            .iter()
            .zip(x_tilde.iter())
            .map(|(&qj, &xj)| {
                if xj.abs() > KINK_TOL {
                    weight * xj.signum() + qj
                } else {
                    (qj.abs() - weight).max(0.0)
                }
            })
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt()),
        Regularizer::L2Norm { weight } => {
            let nx = x_tilde.norm();
            if nx > KINK_TOL {
                Ok((x_tilde * (weight / nx) + q).norm())
            } else {
                Ok((q.norm() - weight).max(0.0))
            }
        }
        Regularizer::GeneralizedLasso { weight, d, .. } => {
            if d.ncols() != x_tilde.len() {
                return Err(ProxError::Dimension { expected: d.ncols(), got: x_tilde.len() });
            }
            let dx = d * x_tilde;
            let mut fixed = DVector::zeros(d.nrows());
            let mut kinks = Vec::new();
            for j in 0..d.nrows() {
                if dx[j].abs() > KINK_TOL {
                    fixed[j] = weight * dx[j].signum();
                } else {
                    kinks.push(j);
                }
            }
            let r = q + d.tr_mul(&fixed);
            if kinks.is_empty() || *weight == 0.0 {
                return Ok(r.norm());
            }
            let dk = d.select_rows(&kinks);
            Ok(box_least_squares_residual(&dk, &r, *weight))
        }
    }
}

/// `min ‖r + Dᵀz‖` over `|z_j| ≤ bound`, by accelerated projected gradient.
fn box_least_squares_residual(d: &DMatrix<f64>, r: &DVector<f64>, bound: f64) -> f64 {
    let lip = spectral_norm_sq(d);
    if lip == 0.0 {
        return r.norm();
    }
    let clip = |z: DVector<f64>| z.map(|v| v.clamp(-bound, bound));
    let mut z = DVector::zeros(d.nrows());
    let mut y = z.clone();
    let mut t = 1.0f64;
    let mut best = r.norm();
    for _ in 0..50_000 {
        let res = r + d.tr_mul(&y);
        let z_next = clip(&y - (d * &res) / lip);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &z_next + (&z_next - &z) * ((t - 1.0) / t_next);
        let moved = (&z_next - &z).norm();
        z = z_next;
        t = t_next;
        best = best.min((r + d.tr_mul(&z)).norm());
        if moved <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    best
}
