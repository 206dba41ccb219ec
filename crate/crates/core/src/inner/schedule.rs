use crate::error::ProxError;

/// Smallest tolerance ever handed to an inner solve.
pub const TOLERANCE_FLOOR: f64 = 1e-15;

/// Per-outer-iteration inner tolerance `ε_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToleranceSchedule {
    Constant(f64),
    InvKSquared(f64),
    LogKOverKSquared(f64),
    StepOverK(f64),
    StepOverLnK(f64),
}

impl ToleranceSchedule {
    pub fn eps0(&self) -> f64 {
        match *self {
            Self::Constant(e)
            | Self::InvKSquared(e)
            | Self::LogKOverKSquared(e)
            | Self::StepOverK(e)
            | Self::StepOverLnK(e) => e,
        }
    }

    /// Whether `Σ ε_k < ∞` holds independently of the iterates.
    pub fn is_summable(&self) -> bool {
        matches!(self, Self::InvKSquared(_) | Self::LogKOverKSquared(_))
    }

    pub fn depends_on_step(&self) -> bool {
        matches!(self, Self::StepOverK(_) | Self::StepOverLnK(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant(_) => "constant",
            Self::InvKSquared(_) => "inv_k2",
            Self::LogKOverKSquared(_) => "log_k_over_k2",
            Self::StepOverK(_) => "step_over_k",
            Self::StepOverLnK(_) => "step_over_ln_k",
        }
    }

    pub fn from_name(name: &str, eps0: f64) -> Option<Self> {
        Some(match name {
            "constant" => Self::Constant(eps0),
            "inv_k2" => Self::InvKSquared(eps0),
            "log_k_over_k2" => Self::LogKOverKSquared(eps0),
            "step_over_k" => Self::StepOverK(eps0),
            "step_over_ln_k" => Self::StepOverLnK(eps0),
            _ => return None,
        })
    }
}

/// `ε_k` for `k ≥ 1`. Logarithms use `ln(k + 1)` so that `k = 1` is defined.
pub fn tolerance(schedule: ToleranceSchedule, k: usize, prev_step_norm: f64) -> Result<f64, ProxError> {
    if k < 1 {
        return Err(ProxError::BadIndex(k));
    }
    let eps0 = schedule.eps0();
    if !(eps0 > 0.0) {
        return Err(ProxError::BadTolerance(eps0));
    }
    let kf = k as f64;
    let ln = (kf + 1.0).ln();
    let eps = match schedule {
        ToleranceSchedule::Constant(_) => eps0,
        ToleranceSchedule::InvKSquared(_) => eps0 / (kf * kf),
        ToleranceSchedule::LogKOverKSquared(_) => eps0 * ln / (kf * kf),
        ToleranceSchedule::StepOverK(_) => eps0 * prev_step_norm / kf,
        ToleranceSchedule::StepOverLnK(_) => eps0 * prev_step_norm / ln,
    };
    Ok(eps.max(TOLERANCE_FLOOR))
}
