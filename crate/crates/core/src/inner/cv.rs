use nalgebra::{DMatrix, DVector};

use crate::error::ProxError;
use crate::linalg::spectral_norm_sq;
use crate::prox::{ProxResult, KINK_TOL};

pub const DEFAULT_INNER_MAX_ITERS: usize = 100_000;

/// When the inner loop stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// `‖x^{l+1} − x^l‖ ≤ tol`, the usual practical criterion.
    #[default]
    StepNorm,
    /// The certified residual bound itself is `≤ tol`.
    Certified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub max_iters: usize,
    /// Start the primal iterate from the supplied point (the current outer iterate).
    pub warm_primal: bool,
    /// Carry the dual across outer iterations instead of restarting at 0.
    pub warm_dual: bool,
    pub stop: StopRule,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { t1: None, t2: None, max_iters: DEFAULT_INNER_MAX_ITERS, warm_primal: true, warm_dual: false, stop: StopRule::StepNorm }
    }
}

impl CvSettings {
    /// Resolved `(t1, t2)`; defaults `t2 = 1`, `t1 = 0.9 / (½ + t2‖DᵀD‖)`.
    pub fn stepsizes(&self, d_norm_sq: f64) -> Result<(f64, f64), ProxError> {
        let t2 = self.t2.unwrap_or(1.0);
        let t1 = self.t1.unwrap_or(0.9 / (0.5 + t2 * d_norm_sq));
        let lhs = 0.5 * t1 + t1 * t2 * d_norm_sq;
        if !(t1 > 0.0 && t2 > 0.0 && lhs < 1.0) {
            return Err(ProxError::InnerStepsize(lhs));
        }
        Ok((t1, t2))
    }
}

/// `|1/t1 − 1|`: the residual bound per unit primal step, before sign repair.
pub fn certificate_factor(t1: f64) -> f64 {
    (1.0 / t1 - 1.0).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    /// Point, certified bound (prox units, i.e. for `θ‖D·‖₁` itself) and iterations.
    pub result: ProxResult,
    pub dual: DVector<f64>,
    pub final_step: f64,
    pub cert_factor: f64,
}

/// `argmin_x θ‖Dx‖₁ + ½‖x − s‖²` by the Condat-Vũ primal-dual iteration
///
/// ```text
/// x⁺ = x − t1 (x − s + Dᵀw)
/// v  = w + t2 D(2x⁺ − x)
/// w⁺ = v − t2 prox_{(θ/t2)‖·‖₁}(v / t2)      (= clip(v, −θ, θ))
/// ```
///
/// The bound returned is `‖x⁺ − s + Dᵀz‖` for a subgradient `z ∈ θ∂‖·‖₁(Dx⁺)`
/// built from `w` with any sign inconsistencies repaired. Since
/// `x⁺ − s + Dᵀw = (1/t1 − 1)(x − x⁺)`, it equals
/// `|1/t1 − 1|·‖x⁺ − x‖` whenever no repair is needed.
pub fn cv_prox_solve(
    d: &DMatrix<f64>,
    s: &DVector<f64>,
    theta: f64,
    warm_start: Option<&DVector<f64>>,
    tol: f64,
    settings: &CvSettings,
) -> Result<CvOutcome, ProxError> {
    cv_prox_solve_warm(d, spectral_norm_sq(d), s, theta, warm_start, None, tol, settings)
}

/// [`cv_prox_solve`] with a cached `‖DᵀD‖` and an optional dual warm start.
#[allow(clippy::too_many_arguments)]
pub fn cv_prox_solve_warm(
    d: &DMatrix<f64>,
    d_norm_sq: f64,
    s: &DVector<f64>,
    theta: f64,
    warm_primal: Option<&DVector<f64>>,
    warm_dual: Option<&DVector<f64>>,
    tol: f64,
    settings: &CvSettings,
) -> Result<CvOutcome, ProxError> {
    if !(tol > 0.0) {
        return Err(ProxError::BadTolerance(tol));
    }
    if !(theta >= 0.0) {
        return Err(ProxError::NegativeWeight(theta));
    }
    let n = s.len();
    let m = d.nrows();
    if d.ncols() != n {
        return Err(ProxError::Dimension { expected: d.ncols(), got: n });
    }
    let (t1, t2) = settings.stepsizes(d_norm_sq)?;
    let cert_factor = certificate_factor(t1);
    if theta == 0.0 || d_norm_sq == 0.0 {
        return Ok(CvOutcome {
            result: ProxResult { point: s.clone(), residual_bound: 0.0, inner_iterations: 0 },
            dual: DVector::zeros(m),
            final_step: 0.0,
            cert_factor,
        });
    }

    let mut x = match warm_primal.filter(|_| settings.warm_primal) {
        Some(x0) if x0.len() != n => return Err(ProxError::Dimension { expected: n, got: x0.len() }),
        Some(x0) => x0.clone(),
        None => s.clone(),
    };
    let mut w = match warm_dual.filter(|_| settings.warm_dual) {
        Some(w0) if w0.len() != m => return Err(ProxError::Dimension { expected: m, got: w0.len() }),
        Some(w0) => w0.map(|v| v.clamp(-theta, theta)),
        None => DVector::zeros(m),
    };
    let mut dx = d * &x;
    let mut last_step = f64::INFINITY;
    for l in 1..=settings.max_iters {
        let g = &x - s + d.tr_mul(&w);
        let x_new = &x - &g * t1;
        let dx_new = d * &x_new;
        let step = (&x_new - &x).norm();

        // x⁺ − s + Dᵀw, then repair w where it disagrees with sign(Dx⁺).
        let mut e = g * (1.0 - t1);
        let mut repair = DVector::zeros(m);
        let mut repaired = false;
        for j in 0..m {
            if dx_new[j].abs() > KINK_TOL {
                let z = theta * dx_new[j].signum();
                if z != w[j] {
                    repair[j] = z - w[j];
                    repaired = true;
                }
            }
        }
        if repaired {
            e += d.tr_mul(&repair);
        }
        let bound = e.norm();

        let v = &w + (&dx_new * 2.0 - &dx) * t2;
        let w_new = v.map(|vj| vj.clamp(-theta, theta));
        // From x = s, w = 0 the first primal step is zero regardless of
        // optimality; only stop there if the dual is stationary as well.
        let dual_moved = l == 1 && w_new != w;
        w = w_new;
        x = x_new;
        dx = dx_new;
        last_step = step;

        let done = match settings.stop {
            StopRule::StepNorm => step <= tol && !dual_moved,
            StopRule::Certified => bound <= tol,
        };
        if done {
            return Ok(CvOutcome {
                result: ProxResult { point: x, residual_bound: bound, inner_iterations: l },
                dual: w,
                final_step: step,
                cert_factor,
            });
        }
    }
    Err(ProxError::IterationCap { cap: settings.max_iters, last_step, tol })
}

pub fn generalized_lasso_objective(d: &DMatrix<f64>, s: &DVector<f64>, theta: f64, x: &DVector<f64>) -> f64 {
    theta * (d * x).lp_norm(1) + 0.5 * (x - s).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::prox_l1;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn identity_d_matches_soft_threshold() {
        let out = cv_prox_solve(&DMatrix::identity(2, 2), &v(&[2.0, -0.5]), 1.0, None, 1e-10, &CvSettings::default()).unwrap();
        assert!((&out.result.point - v(&[1.0, 0.0])).amax() < 1e-8);
        let exact = prox_l1(&v(&[2.0, -0.5]), 1.0).unwrap();
        assert!((out.result.point - exact).amax() < 1e-8);
    }

    #[test]
    fn zero_d_returns_s() {
        let s = v(&[0.3, -1.0, 2.0]);
        let out = cv_prox_solve(&DMatrix::zeros(2, 3), &s, 1.0, None, 1e-10, &CvSettings::default()).unwrap();
        assert_eq!(out.result.point, s);
        assert_eq!(out.result.inner_iterations, 0);
        assert_eq!(out.result.residual_bound, 0.0);
    }

    #[test]
    fn constant_signal_is_fixed_by_differences() {
        let d = DMatrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0]);
        let s = v(&[1.0, 1.0, 1.0]);
        let out = cv_prox_solve(&d, &s, 0.7, None, 1e-12, &CvSettings::default()).unwrap();
        assert_eq!(out.result.point, s);
        assert_eq!(out.result.residual_bound, 0.0);
    }

    #[test]
    fn rejects_bad_settings() {
        let d = DMatrix::identity(2, 2);
        let s = v(&[1.0, 1.0]);
        let bad = CvSettings { t1: Some(1.0), t2: Some(1.0), ..Default::default() };
        assert!(matches!(cv_prox_solve(&d, &s, 1.0, None, 1e-8, &bad), Err(ProxError::InnerStepsize(_))));
        assert!(matches!(cv_prox_solve(&d, &s, 1.0, None, 0.0, &CvSettings::default()), Err(ProxError::BadTolerance(_))));
        let capped = CvSettings { max_iters: 3, ..Default::default() };
        assert!(matches!(
            cv_prox_solve(&d, &v(&[5.0, -3.0]), 1.0, None, 1e-14, &capped),
            Err(ProxError::IterationCap { cap: 3, .. })
        ));
    }

    #[test]
    fn certified_stop_meets_tolerance() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        let s = v(&[2.0, 0.1, -1.5]);
        let settings = CvSettings { stop: StopRule::Certified, ..Default::default() };
        let out = cv_prox_solve(&d, &s, 0.4, None, 1e-9, &settings).unwrap();
        assert!(out.result.residual_bound <= 1e-9);
    }

    #[test]
    fn default_stepsizes_satisfy_condition() {
        let (t1, t2) = CvSettings::default().stepsizes(3.0).unwrap();
        assert_eq!(t2, 1.0);
        assert!((0.5 * t1 + t1 * t2 * 3.0 - 0.9).abs() < 1e-15);
        assert!((certificate_factor(t1) - (1.0 / t1 - 1.0)).abs() < 1e-15);
    }
}
