mod common;

use common::*;
use dipgm::inner::{CvSettings, ToleranceSchedule};
use dipgm::linalg::{kron_apply, Stacked};
use dipgm::model::{LipschitzMode, SmoothTerm};
use dipgm::prox::{prox_l1, Regularizer};
use dipgm::solvers::*;
use dipgm::topology::{generate_random_connected_graph, metropolis_hastings_weights};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn one_step(alg: Algorithm, reg: Regularizer, tau: f64, x0: f64) -> (f64, f64) {
    let problem = Problem::shared_reg(vec![SmoothTerm::isotropic(scalar(0.0))], reg).unwrap();
    let mixing = single_mixing();
    let sizes = StepSizes::uniform(1, tau, 0.5 / tau);
    let inner = CvSettings::default();
    let ctx = exact_ctx(&inner);
    let mut state = SolverState::new(&problem, Some(vec![scalar(x0)]), false).unwrap();
    let info = match alg {
        Algorithm::Dipgm => dipgm_step(&mut state, &problem, &mixing, &sizes, &ctx),
        Algorithm::PgExtra => pgextra_step(&mut state, &problem, &mixing, &sizes, &ctx),
        Algorithm::Nids => nids_step(&mut state, &problem, &mixing, &sizes, &ctx),
    }
    .unwrap();
    assert_eq!(state.lambda[0][0], 0.0);
    (info.x_tilde[0][0], state.x[0][0])
}

#[test]
fn single_agent_gradient_step() {
    for alg in [Algorithm::Dipgm, Algorithm::PgExtra, Algorithm::Nids] {
        let (_, x1) = one_step(alg, Regularizer::zero(), 1.0, 1.0);
        assert_eq!(x1, 0.0, "{alg}");
    }
}

#[test]
fn single_agent_soft_threshold() {
    let (xt, x1) = one_step(Algorithm::Dipgm, Regularizer::l1(1.0).unwrap(), 0.5, 2.0);
    assert_eq!(xt, 0.5);
    assert_eq!(x1, 0.5);
}

/// `x ← prox_{τg}(x − τ∇f(x))` on one agent.
fn proximal_gradient(f: &SmoothTerm, weight: f64, tau: f64, x0: &DVector<f64>, iters: usize) -> Vec<DVector<f64>> {
    let mut x = x0.clone();
    let mut out = vec![x.clone()];
    for _ in 0..iters {
        let g = f.gradient(&x).unwrap();
        x = prox_l1(&(&x - g * tau), tau * weight).unwrap();
        out.push(x.clone());
    }
    out
}

#[test]
fn single_agent_matches_proximal_gradient() {
    let mut r = rng(11);
    let f = random_quadratic(&mut r, 5, 0.05);
    let x0 = random_vector(&mut r, 5) * 3.0;
    let problem = Problem::shared_reg(vec![f.clone()], Regularizer::l1(0.2).unwrap()).unwrap();
    let l = problem.lipschitz(LipschitzMode::Exact).unwrap();
    let tau = 1.5 / l[0];
    let reference = proximal_gradient(&f, 0.2, tau, &x0, 200);
    for alg in [Algorithm::Dipgm, Algorithm::PgExtra, Algorithm::Nids] {
        let mut cfg = RunConfig::new(alg, StepSizes::uniform(1, tau, 0.5 / tau), l.clone());
        cfg.max_iters = 200;
        cfg.x0 = Some(vec![x0.clone()]);
        cfg.keep_iterates = true;
        let trace = run(&problem, &single_mixing(), &cfg).unwrap();
        assert_eq!(trace.snapshots.len(), 201);
        for (k, snap) in trace.snapshots.iter().enumerate() {
            let err = (&snap.x[0] - &reference[k]).amax();
            assert!(err <= 1e-12, "{alg} k={k} err={err:e}");
        }
    }
}

#[test]
fn two_agent_hand_transcription() {
    let c = [1.0, 3.0];
    let tau = [0.8, 0.5];
    let beta = 0.5 / 0.8;
    let problem = Problem::shared_reg(
        c.iter().map(|&ci| SmoothTerm::isotropic(scalar(ci))).collect(),
        Regularizer::zero(),
    )
    .unwrap();
    let w = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
    let mixing = dipgm::topology::MixingMatrix::from_matrix(w).unwrap();
    let sizes = StepSizes { tau: tau.to_vec(), beta };
    let inner = CvSettings::default();
    let ctx = exact_ctx(&inner);
    let mut state = SolverState::new(&problem, None, false).unwrap();

    let (mut x, mut lam) = ([0.0f64; 2], [0.0f64; 2]);
    for _ in 0..2 {
        let xt: Vec<f64> = (0..2).map(|i| x[i] - tau[i] * ((x[i] - c[i]) - lam[i])).collect();
        let m = 0.5 * xt[0] + 0.5 * xt[1];
        let lam_new: Vec<f64> = (0..2).map(|i| lam[i] - beta * (xt[i] - m)).collect();
        for i in 0..2 {
            x[i] = xt[i] - tau[i] * (lam[i] - lam_new[i]);
            lam[i] = lam_new[i];
        }
        dipgm_step(&mut state, &problem, &mixing, &sizes, &ctx).unwrap();
        for i in 0..2 {
            assert!((state.x[i][0] - x[i]).abs() <= 1e-15);
            assert!((state.lambda[i][0] - lam[i]).abs() <= 1e-15);
        }
    }
}

fn random_network(seed: u64, n: usize) -> dipgm::topology::MixingMatrix {
    metropolis_hastings_weights(&generate_random_connected_graph(n, 0.4, seed).unwrap()).unwrap()
}

fn lambda_alpha_gap(seed: u64, n: usize, steps: usize) -> (f64, f64) {
    let problem = quadratic_problem(seed, n, 4, Regularizer::l1(0.05).unwrap());
    let mixing = random_network(seed, n);
    let l = problem.lipschitz(LipschitzMode::Exact).unwrap();
    let sizes = StepSizes::from_lipschitz(&l, 1.9, 0.5, BetaReference::MaxTau);
    let inner = CvSettings::default();
    let ctx = exact_ctx(&inner);
    let mut a = SolverState::new(&problem, None, true).unwrap();
    let mut b = SolverState::new(&problem, None, true).unwrap();
    let (mut gap, mut range) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        dipgm_step(&mut a, &problem, &mixing, &sizes, &ctx).unwrap();
        dipgm_alpha_step(&mut b, &problem, &mixing, &sizes, &ctx).unwrap();
        gap = gap.max(max_diff(&a.x, &b.x));
        let va = kron_apply(mixing.v(), a.alpha.as_ref().unwrap());
        gap = gap.max(max_diff(&a.lambda, &va));
        let sum: DVector<f64> = a.lambda.iter().fold(DVector::zeros(4), |s, l| s + l);
        range = range.max(sum.amax());
    }
    (gap, range)
}

#[test]
fn lambda_and_alpha_forms_agree() {
    let (gap, range) = lambda_alpha_gap(3, 6, 100);
    assert!(gap <= 1e-12, "gap {gap:e}");
    assert!(range <= 1e-10, "dual leaves range(I - W): {range:e}");
}

#[test]
fn alpha_step_is_m_correction() {
    let n = 4;
    let problem = quadratic_problem(5, n, 3, Regularizer::l1(0.1).unwrap());
    let mixing = ring_mixing(n);
    let sizes = StepSizes::uniform(n, 0.3, 0.5 / 0.3);
    let mut r = rng(9);
    let x: Stacked = (0..n).map(|_| random_vector(&mut r, 3)).collect();
    let alpha: Stacked = (0..n).map(|_| random_vector(&mut r, 3)).collect();
    let mut state = SolverState::new(&problem, Some(x.clone()), true).unwrap();
    state.lambda = kron_apply(mixing.v(), &alpha);
    state.alpha = Some(alpha.clone());
    let inner = CvSettings::default();
    dipgm_alpha_step(&mut state, &problem, &mixing, &sizes, &exact_ctx(&inner)).unwrap();

    let va = kron_apply(mixing.v(), &alpha);
    let xt: Stacked = (0..n)
        .map(|i| {
            let g = problem.smooth(i).gradient(&x[i]).unwrap();
            prox_l1(&(&x[i] - (g - &va[i]) * 0.3), 0.3 * 0.1).unwrap()
        })
        .collect();
    let vxt = kron_apply(mixing.v(), &xt);
    let at: Stacked = (0..n).map(|i| &alpha[i] - &vxt[i] * sizes.beta).collect();
    let diff: Stacked = (0..n).map(|i| &alpha[i] - &at[i]).collect();
    let vd = kron_apply(mixing.v(), &diff);
    let x_next: Stacked = (0..n).map(|i| &xt[i] - &vd[i] * 0.3).collect();
    assert!(max_diff(&state.x, &x_next) <= 1e-12);
    assert!(max_diff(state.alpha.as_ref().unwrap(), &at) <= 1e-12);
}

fn eliminated_gap(alg: Algorithm, steps: usize) -> f64 {
    let n = 5;
    let problem = quadratic_problem(21, n, 3, Regularizer::l1(0.05).unwrap());
    let mixing = random_network(21, n);
    let l = problem.lipschitz(LipschitzMode::Exact).unwrap();
    let sizes = match alg {
        Algorithm::PgExtra => StepSizes::shared_from_lipschitz(&l, 0.9, 0.5),
        _ => StepSizes::from_lipschitz(&l, 1.5, 0.5, BetaReference::MaxTau),
    };
    let inner = CvSettings::default();
    let ctx = exact_ctx(&inner);
    let mut r = rng(4);
    let x0: Stacked = (0..n).map(|_| random_vector(&mut r, 3)).collect();
    let mut pd = SolverState::new(&problem, Some(x0.clone()), false).unwrap();
    let mut el = EliminatedState::new(&problem, Some(x0), &sizes).unwrap();
    let mut gap = 0.0f64;
    for _ in 0..steps {
        match alg {
            Algorithm::PgExtra => {
                pgextra_step(&mut pd, &problem, &mixing, &sizes, &ctx).unwrap();
                pgextra_eliminated_step(&mut el, &problem, &mixing, &sizes, &ctx).unwrap();
            }
            _ => {
                nids_step(&mut pd, &problem, &mixing, &sizes, &ctx).unwrap();
                nids_eliminated_step(&mut el, &problem, &mixing, &sizes, &ctx).unwrap();
            }
        }
        gap = gap.max(max_diff(&pd.x, &el.x));
    }
    gap
}

#[test]
fn pgextra_eliminated_form_agrees() {
    let gap = eliminated_gap(Algorithm::PgExtra, 50);
    assert!(gap <= 1e-12, "{gap:e}");
}

#[test]
fn nids_eliminated_form_agrees() {
    let gap = eliminated_gap(Algorithm::Nids, 50);
    assert!(gap <= 1e-12, "{gap:e}");
}

#[test]
fn nids_equals_pgextra_without_gradients() {
    let n = 4;
    let flat = SmoothTerm::quadratic(DMatrix::zeros(2, 2), DVector::zeros(2)).unwrap();
    let problem = Problem::shared_reg(vec![flat; n], Regularizer::l1(0.1).unwrap()).unwrap();
    let mixing = ring_mixing(n);
    let sizes = StepSizes::uniform(n, 0.4, 1.25);
    let inner = CvSettings::default();
    let ctx = exact_ctx(&inner);
    let mut r = rng(2);
    let x0: Stacked = (0..n).map(|_| random_vector(&mut r, 2)).collect();
    let mut a = SolverState::new(&problem, Some(x0.clone()), false).unwrap();
    let mut b = SolverState::new(&problem, Some(x0), false).unwrap();
    for _ in 0..20 {
        pgextra_step(&mut a, &problem, &mixing, &sizes, &ctx).unwrap();
        nids_step(&mut b, &problem, &mixing, &sizes, &ctx).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.lambda, b.lambda);
    }
}

#[test]
fn consensual_fixed_point_is_centralized_optimum() {
    let n = 6;
    let problem = quadratic_problem(8, n, 4, Regularizer::l1(0.1).unwrap());
    let mixing = random_network(8, n);
    let l = problem.lipschitz(LipschitzMode::Exact).unwrap();
    let mut cfg = RunConfig::new(Algorithm::Dipgm, StepSizes::from_lipschitz(&l, 1.5, 0.5, BetaReference::MaxTau), l);
    cfg.max_iters = 3000;
    let trace = run(&problem, &mixing, &cfg).unwrap();
    let xs = &trace.final_state.x;
    assert!(dipgm::diagnostics::consensus_error(xs, &mixing) <= 1e-10);
    let x = &xs[0];
    // Natural residual of Σf_i + Σg_i at a row of X.
    let lf: f64 = problem.lipschitz(LipschitzMode::Exact).unwrap().iter().sum();
    let g = problem.gradient_sum(x).unwrap();
    let p = prox_l1(&(x - g / lf), 0.1 * n as f64 / lf).unwrap();
    assert!((x - p).norm() * lf <= 1e-8);
}

#[test]
fn communication_and_zero_iterations() {
    let problem = quadratic_problem(1, 4, 2, Regularizer::l1(0.1).unwrap());
    let mixing = ring_mixing(4);
    let l = problem.lipschitz(LipschitzMode::Exact).unwrap();
    let sizes = StepSizes::from_lipschitz(&l, 1.0, 0.5, BetaReference::MaxTau);
    let mut cfg = RunConfig::new(Algorithm::Nids, sizes, l);
    cfg.max_iters = 0;
    let trace = run(&problem, &mixing, &cfg).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.status, RunStatus::MaxIters);
    cfg.max_iters = 17;
    let trace = run(&problem, &mixing, &cfg).unwrap();
    assert!(trace.records.iter().all(|r| r.comm_rounds == r.k));
}

#[test]
fn invalid_stepsizes_refused_unless_demo() {
    let n = 10;
    let problem = quadratic_problem(3, n, 3, Regularizer::l1(0.01).unwrap());
    let mixing = ring_mixing(n);
    let l = problem.lipschitz(LipschitzMode::Exact).unwrap();
    let sizes = StepSizes::shared_from_lipschitz(&l, 1.95, 0.5);
    let mut cfg = RunConfig::new(Algorithm::PgExtra, sizes, l);
    cfg.max_iters = 2000;
    assert!(matches!(run(&problem, &mixing, &cfg), Err(dipgm::error::SolverError::Stepsize(_))));
    cfg.allow_invalid_stepsizes = true;
    let trace = run(&problem, &mixing, &cfg).unwrap();
    assert!(!trace.warnings.is_empty());
    assert!(matches!(trace.status, RunStatus::Diverged { .. }), "{:?}", trace.status);
}

#[test]
fn runs_are_deterministic() {
    let cfg_text = common::config("reg.kind = gl\nreg.d = random-gaussian 5x20 seed=1\nstop.max_iters = 30\n");
    let setup = dipgm::bench::build_setup(&cfg_text, 0).unwrap();
    let x_star = DVector::from_element(20, 0.1);
    let rc = dipgm::bench::run_config(&cfg_text, &setup, Algorithm::Dipgm, ToleranceSchedule::StepOverLnK(0.1), &x_star);
    let a = run(&setup.problem, &setup.mixing, &rc).unwrap();
    let b = run(&setup.problem, &setup.mixing, &rc).unwrap();
    let strip = |t: &Trace| t.records.iter().map(|r| IterationRecord { wall_time: 0.0, ..r.clone() }).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.final_state, b.final_state);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn prop_lambda_alpha_and_dual_range(seed in 0u64..1000, n in 2usize..7) {
        let (gap, range) = lambda_alpha_gap(seed, n, 30);
        prop_assert!(gap <= 1e-12);
        prop_assert!(range <= 1e-10);
    }

    #[test]
    fn prop_valid_dipgm_sizes_accepted(seed in 0u64..1000, frac in 0.05f64..1.99, tb in 0.01f64..0.5) {
        let problem = quadratic_problem(seed, 3, 2, Regularizer::zero());
        let mixing = ring_mixing(3);
        let l = problem.lipschitz(LipschitzMode::Exact).unwrap();
        let sizes = StepSizes::from_lipschitz(&l, frac, tb, BetaReference::MaxTau);
        prop_assert!(validate_stepsizes(Algorithm::Dipgm, &l, &sizes, mixing.spectral()).unwrap().is_empty());
        let over = StepSizes::from_lipschitz(&l, 2.0 + frac, tb, BetaReference::MaxTau);
        prop_assert!(!validate_stepsizes(Algorithm::Dipgm, &l, &over, mixing.spectral()).unwrap().is_empty());
    }
}
