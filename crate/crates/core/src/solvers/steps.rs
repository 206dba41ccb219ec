use nalgebra::DVector;
use rayon::prelude::*;

use super::{Problem, StepSizes};
use crate::error::SolverError;
use crate::inner::{tolerance, CvSettings, StopRule, ToleranceSchedule};
use crate::linalg::{kron_apply, Stacked};
use crate::prox::{InnerRequest, ProxOutcome};
use crate::topology::MixingMatrix;

/// Shared knobs for one outer step.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub schedule: ToleranceSchedule,
    pub inner: &'a CvSettings,
    /// Inner tolerance used by PG-EXTRA and NIDS, which have no schedule.
    pub baseline_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Stacked,
    pub lambda: Stacked,
    pub x_tilde_prev: Option<Stacked>,
    /// α-form duals, tracked only in diagnostic mode (`λ = Vα`).
    pub alpha: Option<Stacked>,
    pub k: usize,
    /// `∇f_i(x_i^k)`.
    pub grad: Stacked,
    pub prev_grad: Option<Stacked>,
    pub prev_x: Option<Stacked>,
    pub inner_duals: Vec<Option<DVector<f64>>>,
}

impl SolverState {
    /// `λ⁰ = 0`, `x⁰` given or zero.
    pub fn new(problem: &Problem, x0: Option<Stacked>, track_alpha: bool) -> Result<Self, SolverError> {
        let n = problem.n_agents();
        let dim = problem.dim();
        let x = match x0 {
            Some(x) => {
                if x.len() != n {
                    return Err(SolverError::AgentCount { problem: n, mixing: x.len() });
                }
                if let Some(bad) = x.iter().find(|v| v.len() != dim) {
                    return Err(SolverError::Model {
                        agent: 0,
                        k: 0,
                        source: crate::error::ModelError::Dimension { expected: dim, got: bad.len() },
                    });
                }
                x
            }
            None => vec![DVector::zeros(dim); n],
        };
        let grad = gradients(problem, &x, 0)?;
        Ok(Self {
            lambda: vec![DVector::zeros(dim); n],
            alpha: track_alpha.then(|| vec![DVector::zeros(dim); n]),
            x,
            x_tilde_prev: None,
            k: 0,
            grad,
            prev_grad: None,
            prev_x: None,
            inner_duals: vec![None; n],
        })
    }
}

/// What one outer step produced besides the new state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub x_tilde: Stacked,
    pub alpha_tilde: Option<Stacked>,
    /// Certified `‖d_i‖` per agent.
    pub d_norms: Vec<f64>,
    pub inner_iterations: usize,
    pub kkt_residual: f64,
    pub comm_rounds: usize,
}

fn gradients(problem: &Problem, x: &[DVector<f64>], k: usize) -> Result<Stacked, SolverError> {
    (0..problem.n_agents())
        .into_par_iter()
        .map(|i| problem.smooth(i).gradient(&x[i]).map_err(|source| SolverError::Model { agent: i, k, source }))
        .collect()
}

/// Inner tolerance handed to the solver: the step-norm rule uses `ε` as is,
/// the certified rule converts the `d` bound into prox units.
fn inner_tol(eps: f64, tau: f64, settings: &CvSettings) -> f64 {
    match settings.stop {
        StopRule::StepNorm => eps,
        StopRule::Certified => eps * tau,
    }
}

#[allow(clippy::too_many_arguments)]
fn prox_agents(
    problem: &Problem,
    s: &[DVector<f64>],
    taus: &[f64],
    tols: &[f64],
    warm: &[DVector<f64>],
    duals: &[Option<DVector<f64>>],
    settings: &CvSettings,
    k: usize,
) -> Result<Vec<ProxOutcome>, SolverError> {
    (0..problem.n_agents())
        .into_par_iter()
        .map(|i| {
            let req = InnerRequest {
                tol: inner_tol(tols[i], taus[i], settings),
                warm_primal: Some(&warm[i]),
                warm_dual: duals[i].as_ref(),
                settings,
            };
            problem.reg(i).prox(&s[i], taus[i], &req).map_err(|source| SolverError::Inner { agent: i, k, source })
        })
        .collect()
}

fn check_sizes(problem: &Problem, mixing: &MixingMatrix, sizes: &StepSizes) -> Result<(), SolverError> {
    let n = problem.n_agents();
    if mixing.n_agents() != n {
        return Err(SolverError::AgentCount { problem: n, mixing: mixing.n_agents() });
    }
    if sizes.tau.len() != n {
        return Err(SolverError::AgentCount { problem: n, mixing: sizes.tau.len() });
    }
    Ok(())
}

struct Split {
    points: Stacked,
    d_norms: Vec<f64>,
    inner: usize,
    duals: Vec<Option<DVector<f64>>>,
}

fn split(outs: Vec<ProxOutcome>) -> Split {
    let mut s = Split { points: Vec::new(), d_norms: Vec::new(), inner: 0, duals: Vec::new() };
    for o in outs {
        s.inner += o.result.inner_iterations;
        s.d_norms.push(o.result.residual_bound);
        s.points.push(o.result.point);
        s.duals.push(o.dual);
    }
    s
}

/// `Σ_i (‖∇f_i(x̃_i) − ∇f_i(x_i) − Δλ_i − (x̃_i − x_i)/τ_i‖ + ‖d_i‖)² + cons²`, square-rooted.
#[allow(clippy::too_many_arguments)]
fn kkt_from_parts(
    x: &[DVector<f64>],
    x_tilde: &[DVector<f64>],
    grad_x: &[DVector<f64>],
    grad_xt: &[DVector<f64>],
    dlambda: &[DVector<f64>],
    taus: &[f64],
    d_norms: &[f64],
    cons_sq: f64,
) -> f64 {
    let primal: f64 = (0..x.len())
        .map(|i| {
            let a = &grad_xt[i] - &grad_x[i] - &dlambda[i] - (&x_tilde[i] - &x[i]) / taus[i];
            (a.norm() + d_norms[i]).powi(2)
        })
        .sum();
    (primal + cons_sq.max(0.0)).sqrt()
}

fn step_tolerances(state: &SolverState, schedule: ToleranceSchedule) -> Result<Vec<f64>, SolverError> {
    (0..state.x.len())
        .map(|i| {
            let prev = state.prev_x.as_ref().map_or(1.0, |p| (&state.x[i] - &p[i]).norm());
            tolerance(schedule, state.k + 1, prev).map_err(|source| SolverError::Inner { agent: i, k: state.k, source })
        })
        .collect()
}

/// Agent `i`'s share `½ Σ_j W_ij ‖z_i − z_j‖²` of `‖Vz‖² = ⟨z, (I − W)z⟩`.
fn disagreement(mixing: &MixingMatrix, i: usize, z: &[DVector<f64>]) -> f64 {
    0.5 * mixing.row(i).iter().map(|&(j, w)| w * (&z[i] - &z[j]).norm_squared()).sum::<f64>()
}

fn consensus_sq(mixing: &MixingMatrix, z: &[DVector<f64>]) -> f64 {
    (0..z.len()).map(|i| disagreement(mixing, i, z)).sum()
}

fn mix_all(mixing: &MixingMatrix, z: &[DVector<f64>]) -> Stacked {
    (0..z.len()).into_par_iter().map(|i| mixing.mix_row(i, z)).collect()
}

/// One D-iPGM iteration in λ-form:
///
/// ```text
/// x̃_i ≈ prox_{τ_i g_i}(x_i − τ_i(∇f_i(x_i) − λ_i))      with ‖d_i‖ ≤ ε_k
/// λ_i⁺ = λ_i − β(x̃_i − Σ_j W_ij x̃_j)
/// x_i⁺ = x̃_i − τ_i β(x̃_i − Σ_j W_ij x̃_j)
/// ```
///
/// Only `x̃` is exchanged. When `state.alpha` is tracked it advances as
/// `α⁺ = α − βVx̃`.
pub fn dipgm_step(
    state: &mut SolverState,
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
) -> Result<StepInfo, SolverError> {
    check_sizes(problem, mixing, sizes)?;
    let k = state.k;
    let n = problem.n_agents();
    let beta = sizes.beta;
    let s: Stacked = (0..n).map(|i| &state.x[i] - (&state.grad[i] - &state.lambda[i]) * sizes.tau[i]).collect();
    let tols = step_tolerances(state, ctx.schedule)?;
    let outs = prox_agents(problem, &s, &sizes.tau, &tols, &state.x, &state.inner_duals, ctx.inner, k)?;
    let Split { points: x_tilde, d_norms, inner, duals } = split(outs);

    // Exchange x̃, then everything below is local.
    let local: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let diff = &x_tilde[i] - mixing.mix_row(i, &x_tilde);
            let lambda_new = &state.lambda[i] - &diff * beta;
            let x_new = &x_tilde[i] - &diff * (sizes.tau[i] * beta);
            let f = problem.smooth(i);
            let err = |source| SolverError::Model { agent: i, k, source };
            let grad_new = f.gradient(&x_new).map_err(err)?;
            let grad_xt = f.gradient(&x_tilde[i]).map_err(err)?;
            let cons = disagreement(mixing, i, &x_tilde);
            Ok((lambda_new, x_new, grad_new, grad_xt, cons))
        })
        .collect::<Result<_, SolverError>>()?;

    let mut lambda_new = Vec::with_capacity(n);
    let mut x_new = Vec::with_capacity(n);
    let mut grad_new = Vec::with_capacity(n);
    let mut grad_xt = Vec::with_capacity(n);
    let mut cons_sq = 0.0;
    for (l, x, g, gt, c) in local {
        lambda_new.push(l);
        x_new.push(x);
        grad_new.push(g);
        grad_xt.push(gt);
        cons_sq += c;
    }
    let dlambda: Stacked = lambda_new.iter().zip(&state.lambda).map(|(a, b)| a - b).collect();
    let kkt = kkt_from_parts(&state.x, &x_tilde, &state.grad, &grad_xt, &dlambda, &sizes.tau, &d_norms, cons_sq);

    let alpha_tilde = state.alpha.as_ref().map(|alpha| {
        let vx = kron_apply(mixing.v(), &x_tilde);
        alpha.iter().zip(&vx).map(|(a, v)| a - v * beta).collect::<Stacked>()
    });

    if ctx.inner.warm_dual {
        state.inner_duals = duals;
    }
    state.prev_x = Some(std::mem::replace(&mut state.x, x_new));
    state.prev_grad = Some(std::mem::replace(&mut state.grad, grad_new));
    state.lambda = lambda_new;
    state.alpha.clone_from(&alpha_tilde);
    state.x_tilde_prev = Some(x_tilde.clone());
    state.k += 1;
    Ok(StepInfo { x_tilde, alpha_tilde, d_norms, inner_iterations: inner, kkt_residual: kkt, comm_rounds: 1 })
}

/// One D-iPGM iteration written directly in the `u = (x, α)` variables:
///
/// ```text
/// x̃ = prox(x − Γ(∇F(x) − Vα)),   α̃ = α − βVx̃,
/// x⁺ = x̃ − ΓV(α − α̃),            α⁺ = α̃
/// ```
pub fn dipgm_alpha_step(
    state: &mut SolverState,
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
) -> Result<StepInfo, SolverError> {
    check_sizes(problem, mixing, sizes)?;
    let alpha = state.alpha.as_ref().ok_or(SolverError::MissingState("alpha"))?;
    let k = state.k;
    let n = problem.n_agents();
    let v = mixing.v();
    let va = kron_apply(v, alpha);
    let s: Stacked = (0..n).map(|i| &state.x[i] - (&state.grad[i] - &va[i]) * sizes.tau[i]).collect();
    let tols = step_tolerances(state, ctx.schedule)?;
    let outs = prox_agents(problem, &s, &sizes.tau, &tols, &state.x, &state.inner_duals, ctx.inner, k)?;
    let Split { points: x_tilde, d_norms, inner, duals } = split(outs);

    let vx = kron_apply(v, &x_tilde);
    let alpha_tilde: Stacked = alpha.iter().zip(&vx).map(|(a, w)| a - w * sizes.beta).collect();
    let dalpha: Stacked = alpha.iter().zip(&alpha_tilde).map(|(a, b)| a - b).collect();
    let vdalpha = kron_apply(v, &dalpha);
    let x_new: Stacked = (0..n).map(|i| &x_tilde[i] - &vdalpha[i] * sizes.tau[i]).collect();

    let grad_new = gradients(problem, &x_new, k)?;
    let grad_xt = gradients(problem, &x_tilde, k)?;
    // V(α̃ − α) = −V(α − α̃); ‖(α̃ − α)/β‖ = ‖Vx̃‖.
    let neg: Stacked = vdalpha.iter().map(|z| -z).collect();
    let cons_sq: f64 = vx.iter().map(|z| z.norm_squared()).sum();
    let kkt = kkt_from_parts(&state.x, &x_tilde, &state.grad, &grad_xt, &neg, &sizes.tau, &d_norms, cons_sq);

    if ctx.inner.warm_dual {
        state.inner_duals = duals;
    }
    state.lambda = kron_apply(v, &alpha_tilde);
    state.alpha = Some(alpha_tilde.clone());
    state.prev_x = Some(std::mem::replace(&mut state.x, x_new));
    state.prev_grad = Some(std::mem::replace(&mut state.grad, grad_new));
    state.x_tilde_prev = Some(x_tilde.clone());
    state.k += 1;
    Ok(StepInfo {
        x_tilde,
        alpha_tilde: Some(alpha_tilde),
        d_norms,
        inner_iterations: inner,
        kkt_residual: kkt,
        comm_rounds: 1,
    })
}

/// Shared tail of the two baselines: exchange `y`, update `λ`, report.
#[allow(clippy::too_many_arguments)]
fn baseline_finish(
    state: &mut SolverState,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
    x_new: Stacked,
    grad_new: Stacked,
    y: Stacked,
    split: Split,
) -> StepInfo {
    let my = mix_all(mixing, &y);
    let lambda_new: Stacked = (0..y.len()).map(|i| &state.lambda[i] - (&y[i] - &my[i]) * sizes.beta).collect();
    let dlambda: Stacked = lambda_new.iter().zip(&state.lambda).map(|(a, b)| a - b).collect();
    let cons_sq = consensus_sq(mixing, &x_new);
    let kkt = kkt_from_parts(&state.x, &x_new, &state.grad, &grad_new, &dlambda, &sizes.tau, &split.d_norms, cons_sq);
    if ctx.inner.warm_dual {
        state.inner_duals = split.duals;
    }
    state.lambda = lambda_new;
    state.prev_x = Some(std::mem::replace(&mut state.x, x_new.clone()));
    state.prev_grad = Some(std::mem::replace(&mut state.grad, grad_new));
    state.x_tilde_prev = Some(x_new.clone());
    state.k += 1;
    StepInfo {
        x_tilde: x_new,
        alpha_tilde: None,
        d_norms: split.d_norms,
        inner_iterations: split.inner,
        kkt_residual: kkt,
        comm_rounds: 1,
    }
}

fn baseline_prox(state: &SolverState, problem: &Problem, sizes: &StepSizes, ctx: &StepContext<'_>) -> Result<Split, SolverError> {
    let n = problem.n_agents();
    let s: Stacked = (0..n).map(|i| &state.x[i] - (&state.grad[i] - &state.lambda[i]) * sizes.tau[i]).collect();
    let tols = vec![ctx.baseline_tol; n];
    let outs = prox_agents(problem, &s, &sizes.tau, &tols, &state.x, &state.inner_duals, ctx.inner, state.k)?;
    Ok(split(outs))
}

/// PG-EXTRA in primal-dual form; with `β = 1/(2τ)` this is
///
/// ```text
/// x⁺ = prox_{τG}(x − τ(∇F(x) − λ)),   λ⁺ = λ − β(I − W)(2x⁺ − x)
/// ```
///
/// The exchanged quantity is `2x⁺ − x`.
pub fn pgextra_step(
    state: &mut SolverState,
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
) -> Result<StepInfo, SolverError> {
    check_sizes(problem, mixing, sizes)?;
    let split = baseline_prox(state, problem, sizes, ctx)?;
    let x_new = split.points.clone();
    let grad_new = gradients(problem, &x_new, state.k)?;
    let y: Stacked = x_new.iter().zip(&state.x).map(|(a, b)| a * 2.0 - b).collect();
    Ok(baseline_finish(state, mixing, sizes, ctx, x_new, grad_new, y, split))
}

/// NIDS in primal-dual form:
///
/// ```text
/// x⁺ = prox_{ΓG}(x − Γ(∇F(x) − λ))
/// λ⁺ = λ − β(I − W)(2x⁺ − x + Γ∇F(x) − Γ∇F(x⁺))
/// ```
///
/// The exchanged quantity carries the gradient correction.
pub fn nids_step(
    state: &mut SolverState,
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
) -> Result<StepInfo, SolverError> {
    check_sizes(problem, mixing, sizes)?;
    let split = baseline_prox(state, problem, sizes, ctx)?;
    let x_new = split.points.clone();
    let grad_new = gradients(problem, &x_new, state.k)?;
    let y: Stacked = (0..x_new.len())
        .map(|i| &x_new[i] * 2.0 - &state.x[i] + (&state.grad[i] - &grad_new[i]) * sizes.tau[i])
        .collect();
    Ok(baseline_finish(state, mixing, sizes, ctx, x_new, grad_new, y, split))
}

/// State for the dual-free forms of PG-EXTRA and NIDS, carrying
/// `s = x − Γ∇F(x) + Γλ` instead of `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EliminatedState {
    pub x: Stacked,
    pub s: Stacked,
    pub grad: Stacked,
    pub k: usize,
}

impl EliminatedState {
    /// `λ⁰ = 0`, so `s⁰ = x⁰ − Γ∇F(x⁰)`.
    pub fn new(problem: &Problem, x0: Option<Stacked>, sizes: &StepSizes) -> Result<Self, SolverError> {
        let base = SolverState::new(problem, x0, false)?;
        let s = (0..problem.n_agents()).map(|i| &base.x[i] - &base.grad[i] * sizes.tau[i]).collect();
        Ok(Self { x: base.x, s, grad: base.grad, k: 0 })
    }
}

fn eliminated_step(
    state: &mut EliminatedState,
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
    gradient_in_payload: bool,
) -> Result<(), SolverError> {
    check_sizes(problem, mixing, sizes)?;
    let n = problem.n_agents();
    let tols = vec![ctx.baseline_tol; n];
    let no_duals = vec![None; n];
    let outs = prox_agents(problem, &state.s, &sizes.tau, &tols, &state.x, &no_duals, ctx.inner, state.k)?;
    let x_new = split(outs).points;
    let grad_new = gradients(problem, &x_new, state.k)?;
    let y: Stacked = (0..n)
        .map(|i| {
            let base = &x_new[i] * 2.0 - &state.x[i];
            if gradient_in_payload {
                base + (&state.grad[i] - &grad_new[i]) * sizes.tau[i]
            } else {
                base
            }
        })
        .collect();
    let my = mix_all(mixing, &y);
    let s_new: Stacked = (0..n)
        .map(|i| {
            let mut s = &state.s[i] - &x_new[i] + &y[i] - (&y[i] - &my[i]) * (sizes.tau[i] * sizes.beta);
            if !gradient_in_payload {
                s += (&state.grad[i] - &grad_new[i]) * sizes.tau[i];
            }
            s
        })
        .collect();
    state.x = x_new;
    state.s = s_new;
    state.grad = grad_new;
    state.k += 1;
    Ok(())
}

/// `x⁺ = prox(s)`, `s⁺ = s − x⁺ + W̃(2x⁺ − x) + τ∇F(x) − τ∇F(x⁺)`
/// (written with `I − τβ(I − W)` in place of `W̃` so any `τβ` works).
pub fn pgextra_eliminated_step(
    state: &mut EliminatedState,
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
) -> Result<(), SolverError> {
    eliminated_step(state, problem, mixing, sizes, ctx, false)
}

/// `x⁺ = prox(s)`, `s⁺ = s − x⁺ + W̃(2x⁺ − x + τ∇F(x) − τ∇F(x⁺))`.
pub fn nids_eliminated_step(
    state: &mut EliminatedState,
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    ctx: &StepContext<'_>,
) -> Result<(), SolverError> {
    eliminated_step(state, problem, mixing, sizes, ctx, true)
}
