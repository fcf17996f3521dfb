mod common;

use common::*;
use lfunc_core::evolve::*;
use lfunc_core::lfun::*;
use lfunc_core::scatter::*;
use lfunc_core::{Complex64, Matrix64};
use proptest::prelude::*;

#[test]
fn free_theory_has_trivial_factors() {
    let (space, h) = s1();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let pf = phase_factors(&cfg).unwrap();
    assert!((max_abs(&(&pf.s_hat - Matrix64::identity(4, 4)))) < 1e-10);
    assert!((pf.vacuum_amplitude - c(1.0, 0.0)).norm() < 1e-10);
    assert!(pf.r[0].norm() < 1e-10);
    assert!(pf.r_energy[0].abs() < 1e-10);
    assert!(pf.delta < 1e-10);
}

#[test]
fn scattering_requires_unit_hbar() {
    let (space, h) = s1_quartic(0.1);
    let cfg = EvolutionConfig::new(&space, &h, 0.5, Schedule::new(0.5).unwrap()).unwrap();
    assert!(phase_factors(&cfg).is_err());
}

#[test]
fn rates_must_decrease() {
    let (space, h) = s1_quartic(0.1);
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    assert!(renormalized_s(&cfg, &[0.2, 0.4]).is_err());
    assert!(renormalized_s(&cfg, &[]).is_err());
}

#[test]
fn element_form_matches_operator_form() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let pf = phase_factors(&cfg).unwrap();
    let op = dress(&pf.s_hat, &number_phase(&space, &pf.r));
    assert!(max_abs(&(element_form(&space, &pf) - &op)) < 1e-10);
    // vacuum amplitude squared inverts <0|S|0>
    assert!((pf.vacuum_amplitude.powi(2) * pf.s_hat[(0, 0)] - c(1.0, 0.0)).norm() < 1e-10);
    let u = &pf.s_hat * pf.s_hat.adjoint();
    assert!(max_abs(&(u - Matrix64::identity(space.dim(), space.dim()))) < 1e-8);
}

#[test]
fn renormalized_report_is_consistent() {
    let (space, h) = s1_quartic(0.1);
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let rep = renormalized_s(&cfg, &[0.5, 0.25]).unwrap();
    assert_eq!(rep.per_rate.len(), 2);
    assert_eq!(rep.cauchy.len(), 1);
    for r in &rep.per_rate {
        assert!(r.form_residual < 1e-10);
        assert!(r.unitarity_defect < 1e-8);
        // number conserving: the vacuum is left alone
        assert!((r.dressed[(0, 0)] - c(1.0, 0.0)).norm() < 1e-10);
    }
}

fn random_unimodular(next: &mut impl FnMut() -> f64, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::from_polar(1.0, std::f64::consts::TAU * next())).collect()
}

#[test]
fn n_equivalence_round_trip() {
    let (space, _) = s2();
    let mut next = sampler(7);
    let d = space.dim();
    let s = Matrix64::from_fn(d, d, |_, _| c(next() - 0.5, next() - 0.5));
    let r1 = random_unimodular(&mut next, 2);
    let r2 = random_unimodular(&mut next, 2);
    let u1 = multiplicative_operator(&space, &r1).unwrap();
    let u2 = multiplicative_operator(&space, &r2).unwrap();
    let sp = Matrix64::from_fn(d, d, |i, j| u1[i] * s[(i, j)] * u2[j]);
    let eq = n_equivalence(&space, &s, &sp, &r1, &r2).unwrap();
    assert!(eq.equivalent && eq.residual < 1e-12);
    let mut bumped = sp.clone();
    bumped[(1, 2)] += c(1e-3, 0.0);
    assert!(!n_equivalence(&space, &s, &bumped, &r1, &r2).unwrap().equivalent);
    assert!(n_equivalence(&space, &s, &sp, &[c(1.1, 0.0), c(1.0, 0.0)], &r2).is_err());
    assert!(multiplicative_operator(&space, &r1[..1]).is_err());
}

#[test]
fn multiplicative_operator_rescales_annihilators() {
    let (space, _) = s2();
    let r = [Complex64::from_polar(1.0, 0.4), Complex64::from_polar(1.0, -1.1)];
    let u = multiplicative_operator(&space, &r).unwrap();
    for k in 0..2 {
        let a = space.annihilation(k, 1.0).unwrap();
        let lhs = Matrix64::from_fn(space.dim(), space.dim(), |i, j| u[i] * a[(i, j)] / u[j]);
        assert!(max_abs(&(lhs - &a * r[k])) < 1e-12);
    }
}

#[test]
fn coefficient_phase_is_trivial_on_diagonal_monomials() {
    let (space, _) = s2();
    let u = coefficient_phase(&space, &[0.3, -0.8]);
    let d = space.dim();
    for i in 0..d {
        assert!((u[i * d + i] - c(1.0, 0.0)).norm() < 1e-15);
    }
    for z in u.iter() {
        assert!((z.norm() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn free_inclusive_s_is_identity() {
    let (space, h) = s2();
    let free = h.with_coupling(0.0);
    let cfg = EvolutionConfig::new(&space, &free, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let mut next = sampler(3);
    let support: Vec<usize> = (0..space.dim()).filter(|&i| space.total_number(i) <= 1).collect();
    let k = random_kernel::<f64>(space.dim(), &support, &mut next);
    let f = [c(0.6, 0.0), c(0.0, 0.8)];
    let rep = inclusive_s(&cfg, &[0.5], &f, &[k]).unwrap();
    let r = &rep.per_rate[0];
    assert!(r.one_particle_residual < 1e-10);
    assert!(r.vacuum_residual < 1e-10);
    assert!(r.hats_residual < 1e-10);
    assert!(r.min_eigenvalue > -1e-10);
    let occ = inclusive_observables(&r.outputs[1], &[0, 1]).unwrap();
    assert!((occ[0].1 - 0.36).abs() < 1e-10 && (occ[1].1 - 0.64).abs() < 1e-10);
    let vac = inclusive_observables(&r.outputs[0], &[0, 1]).unwrap();
    assert!(vac.iter().all(|(_, n)| n.abs() < 1e-12));
    assert!(verify_hats(&cfg, &[]).is_err());
}

#[test]
fn interacting_inclusive_s_keeps_positivity() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap().with_route(Route::Truncated);
    let mut next = sampler(5);
    let support: Vec<usize> = (0..space.dim()).collect();
    let k = random_kernel::<f64>(space.dim(), &support, &mut next);
    let rep = inclusive_s(&cfg, &[0.5], &[c(1.0, 0.0), c(0.0, 0.0)], &[k]).unwrap();
    let r = &rep.per_rate[0];
    assert!(r.hats_residual < 1e-8, "{}", r.hats_residual);
    assert!(r.min_eigenvalue > -1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn number_phase_is_unimodular(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (space, _) = s2();
        let u = number_phase(&space, &[c(a, 0.0), c(b, 0.0)]);
        for z in u.iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-13);
        }
        prop_assert!((u[0] - c(1.0, 0.0)).norm() < 1e-15);
    }
}
