use std::time::Instant;

use nalgebra::DVector;

use super::steps::{dipgm_alpha_step, dipgm_step, nids_step, pgextra_step, SolverState, StepContext, StepInfo};
use super::{validate_stepsizes, Algorithm, Problem, StepSizes};
use crate::diagnostics::{consensus_error, h_distance, relative_error};
use crate::error::SolverError;
use crate::inner::{CvSettings, ToleranceSchedule};
use crate::linalg::{stacked_norm, Stacked};
use crate::topology::MixingMatrix;

/// Relative error (or iterate norm growth) beyond which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub sizes: StepSizes,
    /// Per-agent `L_i`, used for stepsize validation.
    pub lipschitz: Vec<f64>,
    pub schedule: ToleranceSchedule,
    pub inner: CvSettings,
    pub baseline_tol: f64,
    pub max_iters: usize,
    pub rel_err_target: Option<f64>,
    pub x_star: Option<DVector<f64>>,
    pub x0: Option<Stacked>,
    /// Track `α` next to `λ` (D-iPGM only).
    pub track_alpha: bool,
    /// Step with the α-form recursion instead of the λ-form.
    pub alpha_form: bool,
    /// `(x_ref, α_ref)` for the H-distance column.
    pub u_ref: Option<(Stacked, Stacked)>,
    pub keep_iterates: bool,
    /// Run even when the stepsize conditions fail (divergence demos).
    pub allow_invalid_stepsizes: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, sizes: StepSizes, lipschitz: Vec<f64>) -> Self {
        Self {
            algorithm,
            sizes,
            lipschitz,
            schedule: ToleranceSchedule::Constant(1e-10),
            inner: CvSettings::default(),
            baseline_tol: 1e-10,
            max_iters: 1000,
            rel_err_target: None,
            x_star: None,
            x0: None,
            track_alpha: false,
            alpha_form: false,
            u_ref: None,
            keep_iterates: false,
            allow_invalid_stepsizes: false,
        }
    }
}

/// One row of a trace. Row `k` describes `x^k`; the step-dependent columns
/// (`kkt_residual`, `d_norms`, `inner_iterations`) come from the step `k−1 → k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub relative_error: Option<f64>,
    pub consensus_error: f64,
    pub kkt_residual: Option<f64>,
    pub d_norms: Vec<f64>,
    pub inner_iterations: usize,
    pub comm_rounds: usize,
    pub wall_time: f64,
    pub h_distance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged { at: usize },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIters => "max_iters",
            Self::Diverged { .. } => "diverged",
        }
    }
}

/// `u^k` and, when a step was taken from it, `ũ^k` and `‖d^k‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub x: Stacked,
    pub alpha: Option<Stacked>,
    pub x_tilde: Option<Stacked>,
    pub alpha_tilde: Option<Stacked>,
    pub d_norms: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub warnings: Vec<String>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: SolverState,
}

impl Trace {
    pub fn outer_iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    pub fn inner_iterations_total(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn comm_rounds(&self) -> usize {
        self.records.last().map_or(0, |r| r.comm_rounds)
    }

    pub fn final_relative_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.relative_error)
    }

    /// Whether every step reported `d = 0`.
    pub fn is_exact(&self) -> bool {
        self.records.iter().all(|r| r.d_norms.iter().all(|&d| d == 0.0))
    }
}

fn rel_err(x: &[DVector<f64>], x_star: &DVector<f64>) -> f64 {
    relative_error(x, x_star).unwrap_or_else(|_| stacked_norm(x) / (x.len() as f64).sqrt())
}

/// Runs `cfg.algorithm` from `x⁰` until the relative-error target, the
/// iteration cap, or divergence.
pub fn run(problem: &Problem, mixing: &MixingMatrix, cfg: &RunConfig) -> Result<Trace, SolverError> {
    let n = problem.n_agents();
    if mixing.n_agents() != n {
        return Err(SolverError::AgentCount { problem: n, mixing: mixing.n_agents() });
    }
    let warnings = validate_stepsizes(cfg.algorithm, &cfg.lipschitz, &cfg.sizes, mixing.spectral())?;
    if !warnings.is_empty() && !cfg.allow_invalid_stepsizes {
        return Err(SolverError::Stepsize(warnings.join("; ")));
    }
    let dipgm = cfg.algorithm == Algorithm::Dipgm;
    let with_alpha = dipgm && (cfg.track_alpha || cfg.alpha_form);
    let ctx = StepContext { schedule: cfg.schedule, inner: &cfg.inner, baseline_tol: cfg.baseline_tol };
    let start = Instant::now();
    let mut state = SolverState::new(problem, cfg.x0.clone(), with_alpha)?;

    let h_dist = |state: &SolverState| -> Option<f64> {
        let (xr, ar) = cfg.u_ref.as_ref()?;
        let alpha = state.alpha.as_ref()?;
        Some(h_distance(&state.x, alpha, xr, ar, &cfg.sizes.tau, cfg.sizes.beta))
    };
    let snapshot = |state: &SolverState| Snapshot {
        x: state.x.clone(),
        alpha: state.alpha.clone(),
        x_tilde: None,
        alpha_tilde: None,
        d_norms: None,
    };
    let x0_norm = stacked_norm(&state.x);

    let mut records = vec![IterationRecord {
        k: 0,
        relative_error: cfg.x_star.as_ref().map(|xs| rel_err(&state.x, xs)),
        consensus_error: consensus_error(&state.x, mixing),
        kkt_residual: None,
        d_norms: vec![0.0; n],
        inner_iterations: 0,
        comm_rounds: 0,
        wall_time: 0.0,
        h_distance: h_dist(&state),
    }];
    let mut snapshots = if cfg.keep_iterates { vec![snapshot(&state)] } else { Vec::new() };
    let mut status = RunStatus::MaxIters;
    if let (Some(target), Some(r)) = (cfg.rel_err_target, records[0].relative_error) {
        if r <= target {
            status = RunStatus::Converged;
        }
    }
    let mut comm = 0;

    while status == RunStatus::MaxIters && state.k < cfg.max_iters {
        let info: StepInfo = match cfg.algorithm {
            Algorithm::Dipgm if cfg.alpha_form => dipgm_alpha_step(&mut state, problem, mixing, &cfg.sizes, &ctx)?,
            Algorithm::Dipgm => dipgm_step(&mut state, problem, mixing, &cfg.sizes, &ctx)?,
            Algorithm::PgExtra => pgextra_step(&mut state, problem, mixing, &cfg.sizes, &ctx)?,
            Algorithm::Nids => nids_step(&mut state, problem, mixing, &cfg.sizes, &ctx)?,
        };
        comm += info.comm_rounds;
        let finite = state.x.iter().all(|v| v.iter().all(|c| c.is_finite()));
        let relative_error = cfg.x_star.as_ref().map(|xs| rel_err(&state.x, xs));
        let record = IterationRecord {
            k: state.k,
            relative_error,
            consensus_error: if finite { consensus_error(&state.x, mixing) } else { f64::INFINITY },
            kkt_residual: Some(info.kkt_residual),
            d_norms: info.d_norms.clone(),
            inner_iterations: info.inner_iterations,
            comm_rounds: comm,
            wall_time: start.elapsed().as_secs_f64(),
            h_distance: h_dist(&state),
        };
        if cfg.keep_iterates {
            if let Some(last) = snapshots.last_mut() {
                last.x_tilde = Some(info.x_tilde);
                last.alpha_tilde = info.alpha_tilde;
                last.d_norms = Some(info.d_norms);
            }
            snapshots.push(snapshot(&state));
        }
        records.push(record);

        let diverged = !finite
            || match relative_error {
                Some(r) => !r.is_finite() || r > DIVERGENCE_THRESHOLD,
                None => stacked_norm(&state.x) > DIVERGENCE_THRESHOLD * x0_norm.max(1.0),
            };
        if diverged {
            status = RunStatus::Diverged { at: state.k };
        } else if let (Some(target), Some(r)) = (cfg.rel_err_target, relative_error) {
            if r <= target {
                status = RunStatus::Converged;
            }
        }
    }

    Ok(Trace { algorithm: cfg.algorithm, records, status, warnings, snapshots, final_state: state })
}
