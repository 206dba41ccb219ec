use nalgebra::{DMatrix, DVector};

use super::data::{check_binary, AgentShard};
use crate::error::ModelError;
use crate::linalg::power_iteration;

pub const POWER_REL_TOL: f64 = 1e-8;
pub const POWER_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    LinearRegression,
    LogisticRegression,
}

/// How the per-agent curvature constant is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LipschitzMode {
    /// Tight bound: includes `1/m_i` and the logistic `1/4`.
    #[default]
    Exact,
    /// `‖A_iᵀA_i‖ + ν₂` with neither factor.
    Loose,
}

/// Data-fit loss averaged over the shard plus `½ν₂‖x‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothLoss {
    pub kind: LossKind,
    pub l2_weight: f64,
}

impl SmoothLoss {
    pub fn new(kind: LossKind, l2_weight: f64) -> Result<Self, ModelError> {
        if !(l2_weight >= 0.0) {
            return Err(ModelError::Invalid(format!("l2 weight must be >= 0, got {l2_weight}")));
        }
        Ok(Self { kind, l2_weight })
    }

    pub fn value_grad(&self, shard: &AgentShard, x: &DVector<f64>) -> Result<(f64, DVector<f64>), ModelError> {
        let m = shard.n_samples();
        if m == 0 {
            return Err(ModelError::EmptyShard);
        }
        if x.len() != shard.n_features() {
            return Err(ModelError::Dimension { expected: shard.n_features(), got: x.len() });
        }
        let inv_m = 1.0 / m as f64;
        let ax = &shard.a * x;
        let (mut value, weights) = match self.kind {
            LossKind::LinearRegression => {
                let r = ax - &shard.b;
                (0.5 * inv_m * r.norm_squared(), r)
            }
            LossKind::LogisticRegression => {
                let mut value = 0.0;
                let mut w = DVector::zeros(m);
                for j in 0..m {
                    let z = shard.b[j] * ax[j];
                    value += softplus(-z);
                    w[j] = -shard.b[j] * sigmoid(-z);
                }
                (inv_m * value, w)
            }
        };
        let mut grad = shard.a.tr_mul(&weights) * inv_m;
        if self.l2_weight > 0.0 {
            value += 0.5 * self.l2_weight * x.norm_squared();
            grad.axpy(self.l2_weight, x, 1.0);
        }
        Ok((value, grad))
    }

    pub fn lipschitz_bound(&self, shard: &AgentShard, mode: LipschitzMode) -> Result<f64, ModelError> {
        let m = shard.n_samples();
        if m == 0 {
            return Err(ModelError::EmptyShard);
        }
        let top = gram_top_eigenvalue(&shard.a)?;
        let scale = match (mode, self.kind) {
            (LipschitzMode::Loose, _) => 1.0,
            (LipschitzMode::Exact, LossKind::LinearRegression) => 1.0 / m as f64,
            (LipschitzMode::Exact, LossKind::LogisticRegression) => 0.25 / m as f64,
        };
        Ok(scale * top + self.l2_weight)
    }
}

/// `σ_max(AᵀA)` by power iteration on the smaller Gram side.
pub fn gram_top_eigenvalue(a: &DMatrix<f64>) -> Result<f64, ModelError> {
    let est = if a.nrows() < a.ncols() {
        power_iteration(a.nrows(), |v| a * a.tr_mul(v), POWER_REL_TOL, POWER_MAX_ITERS)
    } else {
        power_iteration(a.ncols(), |v| a.tr_mul(&(a * v)), POWER_REL_TOL, POWER_MAX_ITERS)
    };
    if !est.converged {
        return Err(ModelError::PowerIteration { iters: est.iterations, estimate: est.value });
    }
    Ok(est.value)
}

/// `ln(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-t})` without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// A smooth local term `f_i` as seen by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothTerm {
    Data { loss: SmoothLoss, shard: AgentShard },
    /// `½xᵀHx − cᵀx` with symmetric PSD `H`.
    Quadratic { h: DMatrix<f64>, c: DVector<f64> },
}

impl SmoothTerm {
    /// Wraps a shard, checking labels when the loss is logistic.
    pub fn data(loss: SmoothLoss, shard: AgentShard) -> Result<Self, ModelError> {
        if shard.n_samples() == 0 {
            return Err(ModelError::EmptyShard);
        }
        if loss.kind == LossKind::LogisticRegression {
            check_binary(shard.b.as_slice())?;
        }
        Ok(Self::Data { loss, shard })
    }

    pub fn quadratic(h: DMatrix<f64>, c: DVector<f64>) -> Result<Self, ModelError> {
        if h.nrows() != h.ncols() || h.nrows() != c.len() {
            return Err(ModelError::Dimension { expected: h.nrows(), got: c.len() });
        }
        Ok(Self::Quadratic { h, c })
    }

    /// `½‖x − center‖²` up to the constant `½‖center‖²`.
    pub fn isotropic(center: DVector<f64>) -> Self {
        let n = center.len();
        Self::Quadratic { h: DMatrix::identity(n, n), c: center }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Data { shard, .. } => shard.n_features(),
            Self::Quadratic { c, .. } => c.len(),
        }
    }

    pub fn value_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>), ModelError> {
        match self {
            Self::Data { loss, shard } => loss.value_grad(shard, x),
            Self::Quadratic { h, c } => {
                if x.len() != c.len() {
                    return Err(ModelError::Dimension { expected: c.len(), got: x.len() });
                }
                let hx = h * x;
                Ok((0.5 * x.dot(&hx) - c.dot(x), hx - c))
            }
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.value_grad(x).map(|(_, g)| g)
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64, ModelError> {
        self.value_grad(x).map(|(v, _)| v)
    }

    pub fn lipschitz(&self, mode: LipschitzMode) -> Result<f64, ModelError> {
        match self {
            Self::Data { loss, shard } => loss.lipschitz_bound(shard, mode),
            Self::Quadratic { h, .. } => {
                if h.is_empty() {
                    return Ok(0.0);
                }
                Ok(h.clone().symmetric_eigenvalues().max().max(0.0))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shard(rows: &[&[f64]], b: &[f64]) -> AgentShard {
        let n = rows[0].len();
        let a = DMatrix::from_row_slice(rows.len(), n, &rows.concat());
        AgentShard::from_dense(0, a, DVector::from_column_slice(b)).unwrap()
    }

    #[test]
    fn linear_single_sample() {
        let loss = SmoothLoss::new(LossKind::LinearRegression, 0.0).unwrap();
        let (v, g) = loss.value_grad(&shard(&[&[1.0, 0.0]], &[1.0]), &DVector::zeros(2)).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, DVector::from_vec(vec![-1.0, 0.0]));
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let s = shard(&[&[1.0, 2.0], &[-0.5, 3.0], &[0.25, -1.0]], &[1.0, -1.0, 1.0]);
        let loss = SmoothLoss::new(LossKind::LogisticRegression, 0.0).unwrap();
        let (_, g) = loss.value_grad(&s, &DVector::zeros(2)).unwrap();
        let expected = -(s.a.tr_mul(&s.b)) / (2.0 * 3.0);
        assert!((g - expected).amax() < 1e-15);
    }

    #[test]
    fn lipschitz_examples() {
        let s = shard(&[&[2.0, 0.0]], &[1.0]);
        let lin = SmoothLoss::new(LossKind::LinearRegression, 1.0).unwrap();
        let log = SmoothLoss::new(LossKind::LogisticRegression, 1.0).unwrap();
        assert!((lin.lipschitz_bound(&s, LipschitzMode::Exact).unwrap() - 5.0).abs() < 1e-12);
        assert!((log.lipschitz_bound(&s, LipschitzMode::Exact).unwrap() - 2.0).abs() < 1e-12);
        assert!((log.lipschitz_bound(&s, LipschitzMode::Loose).unwrap() - 5.0).abs() < 1e-12);
        let zero = shard(&[&[0.0, 0.0], &[0.0, 0.0]], &[1.0, 2.0]);
        assert_eq!(lin.lipschitz_bound(&zero, LipschitzMode::Exact).unwrap(), 1.0);
    }

    #[test]
    fn logistic_curvature_by_second_difference() {
        // Largest directional second difference of the single-sample logistic
        // loss, scanned over the line through the origin, approaches ‖a‖²/4.
        let s = shard(&[&[2.0, 0.0]], &[1.0]);
        let loss = SmoothLoss::new(LossKind::LogisticRegression, 0.0).unwrap();
        let f = |t: f64| loss.value_grad(&s, &DVector::from_vec(vec![t, 0.0])).unwrap().0;
        let h = 1e-4;
        let best = (-200..=200)
            .map(|k| k as f64 * 0.01)
            .map(|t| (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h))
            .fold(f64::MIN, f64::max);
        assert!((best - 1.0).abs() < 1e-5, "{best}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SmoothLoss::new(LossKind::LinearRegression, -1.0).is_err());
        let s = shard(&[&[1.0, 0.0]], &[0.5]);
        let log = SmoothLoss::new(LossKind::LogisticRegression, 0.0).unwrap();
        assert!(matches!(SmoothTerm::data(log, s.clone()), Err(ModelError::BadLabel { index: 0, .. })));
        assert!(matches!(
            log.value_grad(&s, &DVector::zeros(3)),
            Err(ModelError::Dimension { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn stable_logistic_pieces() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
