mod common;

use common::*;
use dipgm::inner::*;
use dipgm::prox::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn certified() -> CvSettings {
    CvSettings { stop: StopRule::Certified, max_iters: 10_000_000, ..CvSettings::default() }
}

#[test]
fn closed_form_examples() {
    let s = DVector::from_vec(vec![3.0, -0.5, 1.0]);
    assert_eq!(prox_l1(&s, 1.0).unwrap(), DVector::from_vec(vec![2.0, 0.0, 0.0]));
    let p = prox_l2norm(&DVector::from_vec(vec![3.0, 4.0]), 1.0).unwrap();
    assert!((p - DVector::from_vec(vec![2.4, 3.2])).amax() <= 1e-15);
    assert_eq!(prox_l2norm(&DVector::from_vec(vec![0.3, 0.4]), 1.0).unwrap(), DVector::zeros(2));
    assert!(prox_l1(&s, -1.0).is_err());
}

#[test]
fn enumeration_oracle_sanity() {
    // D = I reduces to soft thresholding, and m > n still resolves.
    let mut r = rng(5);
    for _ in 0..20 {
        let s = random_vector(&mut r, 4) * 2.0;
        let x = gl_prox_by_enumeration(&DMatrix::identity(4, 4), &s, 0.7);
        assert!((x - prox_l1(&s, 0.7).unwrap()).amax() <= 1e-12);
    }
    let d = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, 0.0, 0.0, 1.0]);
    let s = DVector::from_vec(vec![0.1, -0.05]);
    assert!(gl_prox_by_enumeration(&d, &s, 1.0).amax() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prop_soft_threshold_optimality(seed in 0u64..100_000, n in 1usize..12, theta in 0.0f64..2.0) {
        let mut r = rng(seed);
        let s = random_vector(&mut r, n) * 3.0;
        let x = prox_l1(&s, theta).unwrap();
        let g = Regularizer::l1(theta).unwrap();
        prop_assert!(subgradient_residual(&g, &x, &s, 1.0).unwrap() <= 1e-12);
        let y = random_vector(&mut r, n);
        let y2 = prox_l1(&y, theta).unwrap();
        prop_assert!((&x - &y2).norm() <= (&s - &y).norm() + 1e-12);
    }

    #[test]
    fn prop_cv_matches_oracle(seed in 0u64..100_000, n in 1usize..7, m in 1usize..7, theta in 0.01f64..1.5) {
        let mut r = rng(seed);
        let d = random_matrix(&mut r, m, n) * 2.0;
        let s = random_vector(&mut r, n) * 2.0;
        let out = cv_prox_solve(&d, &s, theta, None, 1e-10, &certified()).unwrap();
        let exact = gl_prox_by_enumeration(&d, &s, theta);
        let err = (&out.result.point - &exact).norm();
        prop_assert!(err <= 1e-8, "err {:e}", err);
        prop_assert!(out.result.residual_bound <= 1e-10);
        let gap = generalized_lasso_objective(&d, &s, theta, &out.result.point)
            - generalized_lasso_objective(&d, &s, theta, &exact);
        prop_assert!(gap >= -1e-12);
    }

    #[test]
    fn prop_schedules(eps0 in 1e-8f64..1.0, k in 1usize..10_000, step in 0.0f64..10.0) {
        for s in [
            ToleranceSchedule::Constant(eps0),
            ToleranceSchedule::InvKSquared(eps0),
            ToleranceSchedule::LogKOverKSquared(eps0),
            ToleranceSchedule::StepOverK(eps0),
            ToleranceSchedule::StepOverLnK(eps0),
        ] {
            let e = tolerance(s, k, step).unwrap();
            prop_assert!(e >= TOLERANCE_FLOOR && e.is_finite());
            if !s.depends_on_step() {
                prop_assert!(tolerance(s, k + 1, step).unwrap() <= e);
            }
        }
    }
}

#[test]
fn loose_tolerance_stops_early() {
    let mut r = rng(3);
    let d = random_matrix(&mut r, 6, 8);
    let s = random_vector(&mut r, 8);
    let tight = cv_prox_solve(&d, &s, 0.3, None, 1e-10, &certified()).unwrap();
    let loose = cv_prox_solve(&d, &s, 0.3, None, 1e-3, &certified()).unwrap();
    assert!(loose.result.inner_iterations < tight.result.inner_iterations);
    let exact = gl_prox_by_enumeration(&d, &s, 0.3);
    assert!((&loose.result.point - &exact).norm() <= 1e-2);
    let warm = cv_prox_solve(&d, &s, 0.3, Some(&tight.result.point), 1e-10, &certified()).unwrap();
    assert!(warm.result.inner_iterations <= tight.result.inner_iterations);
}

/// Smallest `‖x − s + Dᵀw‖` over duals `w` valid at `x`: `w_j = θ sign((Dx)_j)` off
/// the kinks, `w_j ∈ [−θ, θ]` on them (accelerated projected gradient).
fn min_residual(d: &DMatrix<f64>, s: &DVector<f64>, theta: f64, x: &DVector<f64>) -> f64 {
    let dx = d * x;
    let kink: Vec<usize> = (0..d.nrows()).filter(|&j| dx[j].abs() <= KINK_TOL).collect();
    let fixed = DVector::from_fn(d.nrows(), |j, _| if dx[j].abs() > KINK_TOL { theta * dx[j].signum() } else { 0.0 });
    let r = x - s + d.transpose() * fixed;
    if kink.is_empty() {
        return r.norm();
    }
    let dk = DMatrix::from_fn(kink.len(), d.ncols(), |a, c| d[(kink[a], c)]);
    let lip = (&dk * dk.transpose()).symmetric_eigenvalues().max().max(1e-12);
    let (mut w, mut y, mut t) = (DVector::zeros(kink.len()), DVector::zeros(kink.len()), 1.0f64);
    for _ in 0..200_000 {
        let g = &dk * (&r + dk.transpose() * &y);
        let w_new = (&y - g / lip).map(|v| v.clamp(-theta, theta));
        let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &w_new + (&w_new - &w) * ((t - 1.0) / t_new);
        w = w_new;
        t = t_new;
    }
    (&r + dk.transpose() * w).norm()
}

#[test]
fn certificate_soundness_rate() {
    let mut r = rng(808);
    for stop in [StopRule::StepNorm, StopRule::Certified] {
        let settings = CvSettings { stop, max_iters: 10_000_000, ..CvSettings::default() };
        let (mut sound, total) = (0, 100);
        for _ in 0..total {
            let n = 1 + (r.random::<u32>() % 8) as usize;
            let m = 1 + (r.random::<u32>() % 8) as usize;
            let d = random_matrix(&mut r, m, n) * 2.0;
            let s = random_vector(&mut r, n) * 2.0;
            let theta = 0.05 + r.random::<f64>();
            let tol = 1e-6;
            let out = cv_prox_solve(&d, &s, theta, None, tol, &settings).unwrap();
            let true_d = min_residual(&d, &s, theta, &out.result.point);
            if out.result.residual_bound >= true_d * (1.0 - 1e-9) {
                sound += 1;
            }
        }
        assert!(sound * 100 >= total * 95, "{stop:?}: {sound}/{total}");
    }
}
