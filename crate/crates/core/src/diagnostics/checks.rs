use nalgebra::{DMatrix, DVector};

use super::metric::{h1_norm_sq, h_norm_sq, MetricMatrices};
use crate::error::DiagnosticsError;
use crate::linalg::{kron_apply, stacked_dist, stacked_norm, stacked_sub, Stacked};
use crate::solvers::{Snapshot, Trace};
use crate::topology::MixingMatrix;

/// `‖VX‖ = ⟨X, (I − W)X⟩^{1/2}`.
pub fn consensus_error(x: &[DVector<f64>], mixing: &MixingMatrix) -> f64 {
    let s: f64 = (0..x.len()).map(|i| x[i].dot(&(&x[i] - mixing.mix_row(i, x)))).sum();
    s.max(0.0).sqrt()
}

/// `‖VX‖` with an explicit `V`.
pub fn consensus_error_v(x: &[DVector<f64>], v: &DMatrix<f64>) -> f64 {
    stacked_norm(&kron_apply(v, x))
}

/// `‖X − 1 ⊗ x_ref‖ / ‖1 ⊗ x_ref‖`.
pub fn relative_error(x: &[DVector<f64>], x_ref: &DVector<f64>) -> Result<f64, DiagnosticsError> {
    let r = x_ref.norm();
    if r == 0.0 {
        return Err(DiagnosticsError::ZeroReference);
    }
    let num: f64 = x.iter().map(|xi| (xi - x_ref).norm_squared()).sum();
    Ok(num.sqrt() / (r * (x.len() as f64).sqrt()))
}

/// Inputs of the KKT bound at `ũ^k`.
pub struct KktInputs<'a> {
    pub x: &'a [DVector<f64>],
    pub alpha: &'a [DVector<f64>],
    pub x_tilde: &'a [DVector<f64>],
    pub alpha_tilde: &'a [DVector<f64>],
    pub d_norms: &'a [f64],
    pub grad_x: &'a [DVector<f64>],
    pub grad_x_tilde: &'a [DVector<f64>],
    pub v: &'a DMatrix<f64>,
    pub tau: &'a [f64],
    pub beta: f64,
}

/// Square root of
/// `‖∇F(x̃) − ∇F(x) − V(α̃ − α) − Γ⁻¹(x̃ − x) + d‖² + ‖(α̃ − α)/β‖²`,
/// with `d` known only through `‖d_i‖` (triangle inequality per agent).
pub fn kkt_residual(inp: &KktInputs<'_>) -> Result<f64, DiagnosticsError> {
    let n = inp.x.len();
    for (name, len) in [
        ("alpha", inp.alpha.len()),
        ("x_tilde", inp.x_tilde.len()),
        ("alpha_tilde", inp.alpha_tilde.len()),
        ("d_norms", inp.d_norms.len()),
        ("grad_x", inp.grad_x.len()),
        ("grad_x_tilde", inp.grad_x_tilde.len()),
        ("tau", inp.tau.len()),
    ] {
        if len != n {
            return Err(DiagnosticsError::Dimension(format!("{name} has {len} blocks, expected {n}")));
        }
    }
    let dalpha = stacked_sub(inp.alpha_tilde, inp.alpha);
    let vda = kron_apply(inp.v, &dalpha);
    let primal: f64 = (0..n)
        .map(|i| {
            let a = &inp.grad_x_tilde[i] - &inp.grad_x[i] - &vda[i] - (&inp.x_tilde[i] - &inp.x[i]) / inp.tau[i];
            (a.norm() + inp.d_norms[i]).powi(2)
        })
        .sum();
    let dual: f64 = dalpha.iter().map(|z| z.norm_squared()).sum::<f64>() / (inp.beta * inp.beta);
    Ok((primal + dual).sqrt())
}

/// Running means `X^K = (1/K) Σ x̃^k`, `Λ^K = (1/K) Σ α̃^k`.
#[derive(Debug, Clone, Default)]
pub struct ErgodicAverager {
    count: usize,
    x: Stacked,
    alpha: Option<Stacked>,
}

impl ErgodicAverager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: &[DVector<f64>], alpha: Option<&[DVector<f64>]>) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        if self.count == 1 {
            self.x = x.to_vec();
            self.alpha = alpha.map(<[_]>::to_vec);
            return;
        }
        for (m, v) in self.x.iter_mut().zip(x) {
            *m += (v - &*m) * w;
        }
        if let (Some(ma), Some(a)) = (self.alpha.as_mut(), alpha) {
            for (m, v) in ma.iter_mut().zip(a) {
                *m += (v - &*m) * w;
            }
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn x(&self) -> &[DVector<f64>] {
        &self.x
    }

    pub fn alpha(&self) -> Option<&[DVector<f64>]> {
        self.alpha.as_deref()
    }
}

/// Per-step slacks of a descent inequality plus the steps that broke it.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackReport {
    pub slacks: Vec<f64>,
    pub tol: f64,
    pub violations: Vec<(usize, f64)>,
}

impl SlackReport {
    fn from_slacks(slacks: Vec<f64>, tol: f64) -> Self {
        let violations = slacks.iter().enumerate().filter(|(_, s)| **s < -tol).map(|(k, s)| (k, *s)).collect();
        Self { slacks, tol, violations }
    }

    pub fn min_slack(&self) -> f64 {
        self.slacks.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

struct Step<'a> {
    u: (&'a Stacked, &'a Stacked),
    u_tilde: (&'a Stacked, &'a Stacked),
    d: &'a [f64],
    next: (&'a Stacked, &'a Stacked),
}

fn alpha(s: &Snapshot) -> Result<&Stacked, DiagnosticsError> {
    s.alpha.as_ref().ok_or(DiagnosticsError::Missing("alpha iterates"))
}

fn steps(trace: &Trace) -> Result<Vec<Step<'_>>, DiagnosticsError> {
    if trace.snapshots.is_empty() {
        return Err(DiagnosticsError::Missing("iterates (run with keep_iterates)"));
    }
    let mut out = Vec::new();
    for w in trace.snapshots.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        out.push(Step {
            u: (&cur.x, alpha(cur)?),
            u_tilde: (
                cur.x_tilde.as_ref().ok_or(DiagnosticsError::Missing("predictions"))?,
                cur.alpha_tilde.as_ref().ok_or(DiagnosticsError::Missing("alpha predictions"))?,
            ),
            d: cur.d_norms.as_deref().ok_or(DiagnosticsError::Missing("d norms"))?,
            next: (&next.x, alpha(next)?),
        });
    }
    Ok(out)
}

/// `‖u^{k+1} − u*‖²_H ≤ ‖u^k − u*‖²_H − ‖u^k − ũ^k‖²_{Ĥ₁} + 2⟨x̃^k − x*, d^k⟩`
/// with the cross term bounded by `2 Σ_i ‖d_i‖ ‖x̃_i − x*_i‖`.
pub fn fejer_check(trace: &Trace, x_ref: &Stacked, alpha_ref: &Stacked, mm: &MetricMatrices) -> Result<SlackReport, DiagnosticsError> {
    let steps = steps(trace)?;
    if !mm.h1_pd {
        return Err(DiagnosticsError::NotPositiveDefinite("H1"));
    }
    let dist = |u: (&Stacked, &Stacked)| h_norm_sq(&stacked_sub(u.0, x_ref), &stacked_sub(u.1, alpha_ref), mm);
    let first = trace.snapshots[0].alpha.as_ref().ok_or(DiagnosticsError::Missing("alpha iterates"))?;
    let tol = 1e-9 * (1.0 + dist((&trace.snapshots[0].x, first)));
    let mut slacks = Vec::with_capacity(steps.len());
    for s in &steps {
        let descent = h1_norm_sq(&stacked_sub(s.u.0, s.u_tilde.0), &stacked_sub(s.u.1, s.u_tilde.1), mm)?;
        let cross: f64 = s.d.iter().zip(s.u_tilde.0).zip(x_ref).map(|((d, xt), xr)| 2.0 * d * (xt - xr).norm()).sum();
        slacks.push(dist(s.u) - descent + cross - dist(s.next));
    }
    Ok(SlackReport::from_slacks(slacks, tol))
}

/// `‖u^{k+1} − u_ref‖_H ≤ ‖u^k − u_ref‖_H + μ̄ ε_k` with `ε_k = max_i ‖d_i^k‖`.
pub fn quasi_fejer_check(trace: &Trace, x_ref: &Stacked, alpha_ref: &Stacked, mm: &MetricMatrices) -> Result<SlackReport, DiagnosticsError> {
    let steps = steps(trace)?;
    let dist = |u: (&Stacked, &Stacked)| h_norm_sq(&stacked_sub(u.0, x_ref), &stacked_sub(u.1, alpha_ref), mm).sqrt();
    let first = trace.snapshots[0].alpha.as_ref().ok_or(DiagnosticsError::Missing("alpha iterates"))?;
    let tol = 1e-9 * (1.0 + dist((&trace.snapshots[0].x, first)));
    let slacks = steps
        .iter()
        .map(|s| {
            let eps = s.d.iter().copied().fold(0.0, f64::max);
            dist(s.u) + mm.mu_bar * eps - dist(s.next)
        })
        .collect();
    Ok(SlackReport::from_slacks(slacks, tol))
}

/// Flags `r_{k+1} > r_k` beyond `1e-12·r_k + floor_k`, where `floor_k`
/// covers rounding in the differences that produced `r`.
pub fn monotone_series_check(series: &[f64], scale: f64) -> SlackReport {
    let eps = 1e-14 * scale;
    let slacks: Vec<f64> = series
        .windows(2)
        .map(|w| {
            let floor = eps * (w[0].max(0.0).sqrt() + w[1].max(0.0).sqrt()) + eps * eps;
            w[0] + 1e-12 * w[0] + floor - w[1]
        })
        .collect();
    SlackReport::from_slacks(slacks, 0.0)
}

/// `‖u^k − u^{k+1}‖²_H = ‖M(u^k − ũ^k)‖²_H` must not increase on exact runs.
pub fn monotone_residual_check(trace: &Trace, mm: &MetricMatrices) -> Result<SlackReport, DiagnosticsError> {
    if !trace.is_exact() {
        return Err(DiagnosticsError::InexactTrace);
    }
    let steps = steps(trace)?;
    let series: Vec<f64> = steps
        .iter()
        .map(|s| h_norm_sq(&stacked_sub(s.u.0, s.next.0), &stacked_sub(s.u.1, s.next.1), mm))
        .collect();
    let scale = trace
        .snapshots
        .iter()
        .filter_map(|s| s.alpha.as_ref().map(|a| h_norm_sq(&s.x, a, mm).sqrt()))
        .fold(0.0, f64::max);
    Ok(monotone_series_check(&series, scale.max(1.0)))
}

/// `ϱ_k = ‖d^k‖ / ‖x^k − x^{k+1}‖`; `0/0` gives 0, `x/0` gives `+∞` and is flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct InexactnessSeries {
    pub ratios: Vec<f64>,
    pub flagged: Vec<usize>,
}

impl InexactnessSeries {
    pub fn sup(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

pub fn inexactness_ratio(trace: &Trace) -> Result<InexactnessSeries, DiagnosticsError> {
    if trace.snapshots.len() < 2 && trace.records.len() > 1 {
        return Err(DiagnosticsError::Missing("iterates (run with keep_iterates)"));
    }
    let mut ratios = Vec::new();
    let mut flagged = Vec::new();
    for (k, w) in trace.snapshots.windows(2).enumerate() {
        let d = trace.records[k + 1].d_norms.iter().map(|d| d * d).sum::<f64>().sqrt();
        let step = stacked_dist(&w[0].x, &w[1].x);
        let r = if d == 0.0 {
            0.0
        } else if step == 0.0 {
            flagged.push(k);
            f64::INFINITY
        } else {
            d / step
        };
        ratios.push(r);
    }
    Ok(InexactnessSeries { ratios, flagged })
}
