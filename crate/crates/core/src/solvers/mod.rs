//! Decentralized proximal algorithms: D-iPGM (λ- and α-form), PG-EXTRA, NIDS.

mod driver;
mod steps;

use std::fmt;

use nalgebra::DVector;

use crate::error::{ModelError, SolverError};
use crate::model::{LipschitzMode, SmoothTerm};
use crate::prox::Regularizer;
use crate::topology::Spectral;

pub use driver::{run, IterationRecord, RunConfig, RunStatus, Snapshot, Trace, DIVERGENCE_THRESHOLD};
pub use steps::{
    dipgm_alpha_step, dipgm_step, nids_eliminated_step, nids_step, pgextra_eliminated_step, pgextra_step,
    EliminatedState, SolverState, StepContext, StepInfo,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dipgm,
    PgExtra,
    Nids,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dipgm => "dipgm",
            Self::PgExtra => "pg-extra",
            Self::Nids => "nids",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "dipgm" | "d-ipgm" => Some(Self::Dipgm),
            "pg-extra" | "pgextra" => Some(Self::PgExtra),
            "nids" => Some(Self::Nids),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The per-agent pieces `f_i` and `g_i` of `Σ_i f_i(x) + g_i(x)`.
#[derive(Debug, Clone)]
pub struct Problem {
    smooth: Vec<SmoothTerm>,
    regs: Vec<Regularizer>,
    dim: usize,
}

impl Problem {
    pub fn new(smooth: Vec<SmoothTerm>, regs: Vec<Regularizer>) -> Result<Self, ModelError> {
        if smooth.is_empty() {
            return Err(ModelError::NoAgents);
        }
        if smooth.len() != regs.len() {
            return Err(ModelError::Dimension { expected: smooth.len(), got: regs.len() });
        }
        let dim = smooth[0].dim();
        for f in &smooth {
            if f.dim() != dim {
                return Err(ModelError::Dimension { expected: dim, got: f.dim() });
            }
        }
        for g in &regs {
            if let Regularizer::GeneralizedLasso { d, .. } = g {
                if d.ncols() != dim {
                    return Err(ModelError::Dimension { expected: dim, got: d.ncols() });
                }
            }
        }
        Ok(Self { smooth, regs, dim })
    }

    /// Same regularizer on every agent.
    pub fn shared_reg(smooth: Vec<SmoothTerm>, reg: Regularizer) -> Result<Self, ModelError> {
        let regs = vec![reg; smooth.len()];
        Self::new(smooth, regs)
    }

    pub fn n_agents(&self) -> usize {
        self.smooth.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smooth(&self, i: usize) -> &SmoothTerm {
        &self.smooth[i]
    }

    pub fn smooth_terms(&self) -> &[SmoothTerm] {
        &self.smooth
    }

    pub fn reg(&self, i: usize) -> &Regularizer {
        &self.regs[i]
    }

    pub fn regs(&self) -> &[Regularizer] {
        &self.regs
    }

    pub fn lipschitz(&self, mode: LipschitzMode) -> Result<Vec<f64>, ModelError> {
        self.smooth.iter().map(|f| f.lipschitz(mode)).collect()
    }

    /// `Σ_i f_i(x) + g_i(x)` at a common point.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (f, g) in self.smooth.iter().zip(&self.regs) {
            total += f.value(x)? + g.value(x);
        }
        Ok(total)
    }

    pub fn gradient_sum(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let mut total = DVector::zeros(self.dim);
        for f in &self.smooth {
            total += f.gradient(x)?;
        }
        Ok(total)
    }
}

/// How `β` is derived from a product `τβ` when the `τ_i` differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaReference {
    /// `β = (τβ) / max_i τ_i`; always satisfies the D-iPGM condition for `τβ ≤ ½`.
    #[default]
    MaxTau,
    MinTau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSizes {
    pub tau: Vec<f64>,
    pub beta: f64,
}

impl StepSizes {
    pub fn uniform(n_agents: usize, tau: f64, beta: f64) -> Self {
        Self { tau: vec![tau; n_agents], beta }
    }

    /// `τ_i = frac / L_i` and `β` from the product `tau_beta`.
    pub fn from_lipschitz(lipschitz: &[f64], frac: f64, tau_beta: f64, reference: BetaReference) -> Self {
        let tau: Vec<f64> = lipschitz.iter().map(|l| frac / l).collect();
        Self::with_product(tau, tau_beta, reference)
    }

    /// Shared `τ = frac / max_i L_i`.
    pub fn shared_from_lipschitz(lipschitz: &[f64], frac: f64, tau_beta: f64) -> Self {
        let l_max = lipschitz.iter().copied().fold(0.0, f64::max);
        Self::with_product(vec![frac / l_max; lipschitz.len()], tau_beta, BetaReference::MaxTau)
    }

    pub fn with_product(tau: Vec<f64>, tau_beta: f64, reference: BetaReference) -> Self {
        let t = match reference {
            BetaReference::MaxTau => tau.iter().copied().fold(0.0, f64::max),
            BetaReference::MinTau => tau.iter().copied().fold(f64::INFINITY, f64::min),
        };
        Self { tau, beta: tau_beta / t }
    }

    pub fn max_tau(&self) -> f64 {
        self.tau.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_shared(&self) -> bool {
        self.tau.windows(2).all(|w| w[0] == w[1])
    }
}

/// Checks the per-algorithm stepsize conditions (all strict except `β ≤ ½/max τ`).
///
/// Returns the list of violated conditions; an empty list means valid.
/// Nonpositive or mismatched inputs are errors.
pub fn validate_stepsizes(
    algorithm: Algorithm,
    lipschitz: &[f64],
    sizes: &StepSizes,
    spectral: &Spectral,
) -> Result<Vec<String>, SolverError> {
    if sizes.tau.len() != lipschitz.len() {
        return Err(SolverError::AgentCount { problem: lipschitz.len(), mixing: sizes.tau.len() });
    }
    if let Some((i, t)) = sizes.tau.iter().enumerate().find(|(_, t)| !(**t > 0.0)) {
        return Err(SolverError::Stepsize(format!("tau[{i}] = {t} must be positive")));
    }
    if !(sizes.beta > 0.0) {
        return Err(SolverError::Stepsize(format!("beta = {} must be positive", sizes.beta)));
    }
    if let Some((i, l)) = lipschitz.iter().enumerate().find(|(_, l)| !(**l > 0.0)) {
        return Err(SolverError::Stepsize(format!("L[{i}] = {l} must be positive")));
    }
    let mut violations = Vec::new();
    let per_agent = |out: &mut Vec<String>| {
        for (i, (t, l)) in sizes.tau.iter().zip(lipschitz).enumerate() {
            if !(*t < 2.0 / l) {
                out.push(format!("tau[{i}] = {t} must be < 2/L_i = {}", 2.0 / l));
            }
        }
    };
    let beta_cap = |out: &mut Vec<String>| {
        let cap = 0.5 / sizes.max_tau();
        if sizes.beta > cap {
            out.push(format!("beta = {} must be <= 0.5/max tau = {cap}", sizes.beta));
        }
    };
    match algorithm {
        Algorithm::Dipgm => {
            per_agent(&mut violations);
            beta_cap(&mut violations);
        }
        Algorithm::PgExtra => {
            if !sizes.is_shared() {
                violations.push("PG-EXTRA needs a shared tau".into());
            }
            let l_f = lipschitz.iter().copied().fold(0.0, f64::max);
            let bound = (1.0 + spectral.sigma_min_w) / l_f;
            let tau = sizes.max_tau();
            if !(tau < bound) {
                violations.push(format!("tau = {tau} must be < (1 + sigma_m(W))/L_F = {bound}"));
            }
        }
        Algorithm::Nids => {
            per_agent(&mut violations);
            beta_cap(&mut violations);
        }
    }
    Ok(violations)
}
