use super::metric::h_distance;
use crate::error::SolverError;
use crate::inner::{CvSettings, ToleranceSchedule};
use crate::linalg::Stacked;
use crate::solvers::{dipgm_step, Problem, SolverState, StepContext, StepSizes};
use crate::topology::MixingMatrix;

/// Limit point `u^∞ = (x^∞, α^∞)` of a long D-iPGM run, standing in for
/// a point of the saddle set.
#[derive(Debug, Clone)]
pub struct ReferencePoint {
    pub x: Stacked,
    pub alpha: Stacked,
    pub iterations: usize,
    pub last_step: f64,
    pub converged: bool,
}

/// Runs D-iPGM with `α` tracking until `‖u^{k+1} − u^k‖_H ≤ tol` or `max_iters`.
pub fn long_run_reference(
    problem: &Problem,
    mixing: &MixingMatrix,
    sizes: &StepSizes,
    inner_tol: f64,
    tol: f64,
    max_iters: usize,
) -> Result<ReferencePoint, SolverError> {
    let settings = CvSettings { stop: crate::inner::StopRule::Certified, ..CvSettings::default() };
    let ctx = StepContext { schedule: ToleranceSchedule::Constant(inner_tol), inner: &settings, baseline_tol: inner_tol };
    let mut state = SolverState::new(problem, None, true)?;
    let mut last_step = f64::INFINITY;
    while state.k < max_iters {
        let x_prev = state.x.clone();
        let a_prev = state.alpha.clone().expect("alpha tracked");
        dipgm_step(&mut state, problem, mixing, sizes, &ctx)?;
        let alpha = state.alpha.as_ref().expect("alpha tracked");
        last_step = h_distance(&state.x, alpha, &x_prev, &a_prev, &sizes.tau, sizes.beta);
        if last_step <= tol {
            break;
        }
    }
    Ok(ReferencePoint {
        converged: last_step <= tol,
        iterations: state.k,
        last_step,
        alpha: state.alpha.take().expect("alpha tracked"),
        x: state.x,
    })
}
