//! Inner solver for `prox` of `θ‖D·‖₁` and the outer tolerance schedules.

mod cv;
mod schedule;

pub use cv::{
    certificate_factor, cv_prox_solve, cv_prox_solve_warm, generalized_lasso_objective, CvOutcome,
    CvSettings, StopRule, DEFAULT_INNER_MAX_ITERS,
};
pub use schedule::{tolerance, ToleranceSchedule, TOLERANCE_FLOOR};
