mod common;

use approx::assert_abs_diff_eq;
use common::*;
use lfunc_core::evolve::*;
use lfunc_core::fock::*;
use lfunc_core::lfun::*;
use lfunc_core::{Error, Matrix64};
use proptest::prelude::*;

#[test]
fn schedule_shape() {
    let s = Schedule::new(0.1).unwrap();
    assert_eq!(s.value(0.0), 1.0);
    assert_abs_diff_eq!(s.value(3.0), s.value(-3.0));
    assert!(s.tail() < 1e-8);
    assert_abs_diff_eq!(s.horizon, 43.0, epsilon = 1e-12);
    let t = s.time_for_value(0.4).unwrap();
    assert!(t < 0.0);
    assert_abs_diff_eq!(s.value(t), 0.4, epsilon = 1e-14);
    assert_eq!(s.time_for_value(0.0).unwrap(), -s.horizon);
}

#[test]
fn short_horizon_is_rejected() {
    let err = Schedule::with_horizon(Profile::Gaussian, 0.1, 10.0, 1e-8).unwrap_err();
    assert!(matches!(err, Error::Horizon { .. }));
}

#[test]
fn rescaled_schedule_keeps_the_tail() {
    let s = Schedule::new(0.2).unwrap().with_rate(0.05).unwrap();
    assert_abs_diff_eq!(s.horizon, 86.0, epsilon = 1e-10);
    assert_abs_diff_eq!(s.tail(), Schedule::new(0.2).unwrap().tail(), epsilon = 1e-20);
}

#[test]
fn fourth_order_convergence() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h.with_coupling(1.0), 1.0, Schedule::new(1.0).unwrap()).unwrap();
    let r = order_ratio(&cfg, -3.0, 3.0, 40).unwrap();
    assert!((12.0..20.0).contains(&r), "ratio {r}");
}

#[test]
fn propagators_are_unitary_and_compose() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let s1 = interaction_s(&cfg, -4.0, 0.5).unwrap();
    let s2 = interaction_s(&cfg, 0.5, 3.0).unwrap();
    let s = interaction_s(&cfg, -4.0, 3.0).unwrap();
    let id = Matrix64::identity(9, 9);
    let u = (&s * s.adjoint() - &id).norm();
    assert!(u < 1e-10, "{u:e}");
    assert!((&s2 * &s1 - &s).norm() < 1e-6);
}

#[test]
fn free_adiabatic_s_is_identity() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h.with_coupling(0.0), 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let s = adiabatic_s_hat(&cfg).unwrap();
    assert!((s.matrix - Matrix64::identity(9, 9)).norm() < 1e-12);
}

#[test]
fn dyson_series_agrees_at_small_coupling() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h.with_coupling(0.001), 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let exact = adiabatic_s_hat(&cfg).unwrap();
    let d2 = dyson_s_hat(&cfg, 2, 4000).unwrap();
    let d3 = dyson_s_hat(&cfg, 3, 4000).unwrap();
    let e2 = (&d2 - &exact.matrix).norm();
    let e3 = (&d3 - &exact.matrix).norm();
    assert!(e3 < e2 && e3 < 1e-4, "{e2:e} {e3:e}");
}

#[test]
fn richardson_estimate_is_small() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.2).unwrap()).unwrap();
    let s = adiabatic_s_hat(&cfg).unwrap();
    assert!(s.richardson < 1e-10, "{:e}", s.richardson);
    assert!(s.tail_bound < 1e-6);
}

#[test]
fn hilbert_and_l_evolution_agree() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.2).unwrap()).unwrap().with_route(Route::Truncated);
    let all: Vec<usize> = (0..space.dim()).collect();
    let mut rnd = sampler(21);
    let k: Matrix64 = random_kernel(space.dim(), &all, &mut rnd);
    let l = l_from_density(&space, &k, 1.0).unwrap();
    let t0 = -cfg.schedule.horizon;
    for t1 in [-5.0, 0.0] {
        let lt = evolve_l(&cfg, &l, t0, t1).unwrap();
        let State::Kernel(kt) = evolve_state(&cfg, &State::Kernel(k.clone()), t0, t1).unwrap() else { unreachable!() };
        let expected = l_from_density(&space, &kt, 1.0).unwrap();
        assert!(lt.distance(&expected) < 1e-8, "{:e}", lt.distance(&expected));
    }
}

#[test]
fn interaction_picture_l_matches_hilbert() {
    let (space, h) = s1_quartic(0.2);
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap().with_route(Route::Truncated);
    let psi = (space.basis_vector(0) + space.basis_vector(1)) * c(0.5f64.sqrt(), 0.0);
    let k = &psi * psi.adjoint();
    let l = l_from_density(&space, &k, 1.0).unwrap();
    let x = Matrix64::from_column_slice(16, 1, l.to_vector().as_slice());
    let y = interaction_s_l_apply(&cfg, &x, -2.0, 1.5).unwrap();
    let s = interaction_s(&cfg, -2.0, 1.5).unwrap();
    let expected = l_from_density(&space, &(&s * &k * s.adjoint()), 1.0).unwrap().to_vector();
    assert!((y.column(0) - expected).norm() < 1e-9);
}

#[test]
fn zero_hbar_evolution_runs() {
    let (space, h) = s1_quartic(0.3);
    let cfg = EvolutionConfig::new(&space, &h, 0.0, Schedule::new(1.0).unwrap()).unwrap();
    let l = gaussian_l(&space, 0.0, &[0.4]).unwrap();
    let out = evolve_l(&cfg, &l, -1.0, 1.0).unwrap();
    assert!(out.coefficients().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    assert!(matches!(interaction_s(&cfg, -1.0, 1.0), Err(Error::Validation(_))));
}

#[test]
fn step_plan_scales_with_interval() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.2).unwrap()).unwrap();
    let a = step_plan(&cfg, -10.0, 0.0).unwrap();
    let b = step_plan(&cfg, -20.0, 0.0).unwrap();
    assert!(b.steps >= 2 * a.steps - 1);
    assert_abs_diff_eq!(a.dt() * a.steps as f64, 10.0, epsilon = 1e-12);
}

#[test]
fn bad_tolerance_is_rejected() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.2).unwrap()).unwrap();
    assert!(cfg.clone().with_rtol(0.0).is_err());
    assert!(cfg.with_rtol(1e-8).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn evolution_preserves_trace_and_hermiticity(seed in 0u64..500, t1 in -2.0f64..2.0) {
        let (space, h) = s1_quartic(0.5);
        let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(1.0).unwrap()).unwrap().with_route(Route::Truncated);
        let all: Vec<usize> = (0..space.dim()).collect();
        let mut rnd = sampler(seed);
        let k: Matrix64 = random_kernel(space.dim(), &all, &mut rnd);
        let l = l_from_density(&space, &k, 1.0).unwrap();
        let out = evolve_l(&cfg, &l, -2.0, t1).unwrap();
        prop_assert!((out.value_at_zero().re - 1.0).abs() < 1e-10);
        let kt = density_from_l(&out).unwrap().kernel;
        prop_assert!(hermiticity_defect(&kt) < 1e-9);
        prop_assert!(min_eigenvalue(&kt) > -1e-9);
    }
}
