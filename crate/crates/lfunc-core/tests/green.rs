mod common;

use common::*;
use lfunc_core::evolve::*;
use lfunc_core::fock::*;
use lfunc_core::green::*;
use lfunc_core::lfun::*;
use lfunc_core::{Complex64, Matrix64, Vector64};
use proptest::prelude::*;

fn ladder(space: &FockSpace<f64>, ins: &Insertion, hbar: f64) -> Matrix64 {
    let a = space.annihilation(ins.mode, hbar).unwrap();
    match ins.sigma.ladder {
        Ladder::Creation => a.adjoint(),
        Ladder::Annihilation => a,
    }
}

fn hilbert_list(space: &FockSpace<f64>, ins: &[Insertion], hbar: f64) -> Vec<(Matrix64, f64)> {
    ins.iter().map(|i| (ladder(space, i, hbar), i.time)).collect()
}

fn ground_state(m: &Matrix64) -> Vector64 {
    let e = m.clone().symmetric_eigen();
    let j = e.eigenvalues.imin();
    e.eigenvectors.column(j).clone_owned()
}

fn ins(mode: usize, time: f64, ladder: Ladder, rho: Rho) -> Insertion {
    Insertion::new(mode, time, ladder, rho)
}

#[test]
fn free_vacuum_two_point() {
    let (space, h) = s1();
    for hbar in [1.0, 0.5] {
        let hm = build_hamiltonian(&space, &h, hbar).unwrap();
        let a = space.annihilation(0, hbar).unwrap();
        let vac = space.vacuum();
        for (t, tau) in [(0.7, 0.0), (0.0, 0.7), (1.3, -0.4)] {
            let g = green_fn(&hm, &vac, &[(a.clone(), t), (a.adjoint(), tau)], hbar).unwrap();
            let expected = if t >= tau { Complex64::new(0.0, -(t - tau)).exp() * hbar } else { c(0.0, 0.0) };
            assert!((g - expected).norm() < 1e-12);
        }
        // equal times keep the written order
        let g = green_fn(&hm, &vac, &[(a.clone(), 0.3), (a.adjoint(), 0.3)], hbar).unwrap();
        assert!((g - c(hbar, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn number_operator_on_vacuum() {
    let (space, h) = s1();
    let hm = build_hamiltonian(&space, &h, 1.0).unwrap();
    let a = space.annihilation(0, 1.0).unwrap();
    let n = a.adjoint() * &a;
    for t in [-1.0, 0.0, 2.0] {
        assert_eq!(green_fn(&hm, &space.vacuum(), &[(n.clone(), t)], 1.0).unwrap(), c(0.0, 0.0));
    }
}

#[test]
fn empty_insertions_are_rejected() {
    let (space, h) = s1();
    let hm = build_hamiltonian(&space, &h, 1.0).unwrap();
    assert!(green_fn(&hm, &space.vacuum(), &[], 1.0).is_err());
    let l = gaussian_l(&space, 1.0, &[0.5]).unwrap();
    assert!(ggreen(&space, &h, &l, &[], Route::Algebraic).is_err());
}

#[test]
fn application_order_breaks_ties_by_position() {
    assert_eq!(application_order(&[0.5, -1.0, 0.5]), vec![1, 2, 0]);
}

#[test]
fn all_plain_is_the_conventional_green_function() {
    let (space, h) = s3();
    let hm = build_hamiltonian(&space, &h, 1.0).unwrap();
    let phi = ground_state(&hm);
    let l = l_from_density(&space, &(&phi * phi.adjoint()), 1.0).unwrap();
    let list = [
        ins(0, 0.8, Ladder::Annihilation, Rho::Plain),
        ins(1, -0.3, Ladder::Annihilation, Rho::Plain),
        ins(1, 0.4, Ladder::Creation, Rho::Plain),
        ins(0, 0.1, Ladder::Creation, Rho::Plain),
    ];
    let gg = ggreen(&space, &h, &l, &list, Route::Truncated).unwrap();
    let g = green_fn(&hm, &phi, &hilbert_list(&space, &list, 1.0), 1.0).unwrap();
    assert!((gg - g).norm() < 1e-8, "{gg} {g}");
    assert!(g.norm() > 1e-4);
}

#[test]
fn all_tilde_is_the_conjugate_of_the_adjoint_list() {
    let (space, h) = s2();
    let hm = build_hamiltonian(&space, &h, 1.0).unwrap();
    let phi = ground_state(&hm);
    let mut psi = phi.clone();
    psi[space.index(&[1, 0])] = c(0.3, 0.4);
    let psi = &psi / c(psi.norm(), 0.0);
    let l = l_from_density(&space, &(&psi * psi.adjoint()), 1.0).unwrap();
    let plain = [ins(0, 0.9, Ladder::Annihilation, Rho::Plain), ins(0, -0.2, Ladder::Creation, Rho::Plain)];
    let tilde: Vec<Insertion> = plain.iter().map(|i| Insertion { sigma: Sigma { ladder: i.sigma.ladder.adjoint(), rho: Rho::Tilde }, ..*i }).collect();
    let p = ggreen(&space, &h, &l, &plain, Route::Truncated).unwrap();
    let t = ggreen(&space, &h, &l, &tilde, Route::Truncated).unwrap();
    assert!((t - p.conj()).norm() < 1e-8);
}

#[test]
fn rho_sum_vanishes() {
    let lists = [
        vec![ins(0, 0.4, Ladder::Annihilation, Rho::Plain), ins(0, -0.5, Ladder::Creation, Rho::Plain)],
        vec![
            ins(0, 0.4, Ladder::Annihilation, Rho::Plain),
            ins(0, 1.1, Ladder::Creation, Rho::Plain),
            ins(0, -0.5, Ladder::Creation, Rho::Plain),
        ],
    ];
    for (space, h) in [s1_quartic(0.2), s2()] {
        let n: Vec<f64> = (0..space.mode_count()).map(|k| 0.3 + 0.1 * k as f64).collect();
        let l = gaussian_l(&space, 1.0, &n).unwrap();
        for list in &lists {
            for route in [Route::Algebraic, Route::Truncated] {
                assert!(rho_sum(&space, &h, &l, list, route).unwrap().norm() < 1e-8);
            }
        }
    }
}

#[test]
fn adiabatic_green_without_interaction() {
    let (space, h) = s2();
    let free = h.with_coupling(0.0);
    let cfg = EvolutionConfig::new(&space, &free, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let hm = build_hamiltonian(&space, &free, 1.0).unwrap();
    let vac = space.vacuum();
    let a = space.annihilation(1, 1.0).unwrap();
    let list = [(a.clone(), 0.6), (a.adjoint(), -0.2)];
    let r = adiabatic_green(&cfg, &vac, &list).unwrap();
    let g = green_fn(&hm, &vac, &list, 1.0).unwrap();
    assert!((r.value - g).norm() < 1e-10);
    assert!((r.denominator - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn adiabatic_green_times_must_be_inside_the_window() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let a = space.annihilation(0, 1.0).unwrap();
    assert!(adiabatic_green(&cfg, &space.vacuum(), &[(a, 100.0)]).is_err());
}

#[test]
fn adiabatic_green_approaches_the_dressed_theory() {
    let (space, h) = s2();
    let hm = build_hamiltonian(&space, &h, 1.0).unwrap();
    let phi = ground_state(&hm);
    let a = space.annihilation(0, 1.0).unwrap();
    let list = [(a.clone(), 0.5), (a.adjoint(), 0.0)];
    let exact = green_fn(&hm, &phi, &list, 1.0).unwrap();
    let err: Vec<f64> = [0.5, 0.25]
        .iter()
        .map(|&r| {
            let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(r).unwrap()).unwrap();
            (adiabatic_green(&cfg, &space.vacuum(), &list).unwrap().value - exact).norm()
        })
        .collect();
    assert!(err[1] <= err[0] + 1e-12, "{err:?}");
}

#[test]
fn adiabatic_ggreen_without_interaction() {
    let (space, h) = s1();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let l = gaussian_l(&space, 1.0, &[0.5]).unwrap();
    let list = [ins(0, 0.7, Ladder::Creation, Rho::Plain), ins(0, 0.0, Ladder::Annihilation, Rho::Plain)];
    let a = adiabatic_ggreen(&cfg, &l, &list).unwrap();
    let g = ggreen(&space, &h, &l, &list, Route::Algebraic).unwrap();
    assert!((a - g).norm() < 1e-10);
}

#[test]
fn stationary_gaussian_is_invariant_under_free_s() {
    let (space, h) = s1();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.5).unwrap()).unwrap();
    let l = gaussian_l(&space, 1.0, &[0.5]).unwrap();
    let x = Matrix64::from_column_slice(16, 1, l.to_vector().as_slice());
    let tt = cfg.schedule.horizon;
    let y = interaction_s_l_apply(&cfg, &x, -tt, tt).unwrap();
    assert!((y - x).norm() < 1e-12);
}

#[test]
fn keldysh_table_matches_the_oracle() {
    let table = keldysh_table(0.5, 1.0, 1.0).unwrap();
    assert_eq!(table.entries.len(), 16);
    for e in &table.entries {
        for (t, tau) in [(0.7, 0.0), (0.0, 0.7), (0.25, 0.25)] {
            let exact = free_two_point(0.5, 1.0, 1.0, e.first, e.second, t, tau).unwrap();
            assert!((table.value(e.first, e.second, t, tau) - exact).norm() < 1e-8);
        }
        if e.is_zero() {
            assert!(free_two_point(0.5, 1.0, 1.0, e.first, e.second, 0.7, 0.0).unwrap().norm() < 1e-10);
        }
    }
    assert_eq!(table.nonzero_count(), 8);
    assert_eq!(table.entries.iter().filter(|e| e.printed.is_some()).count(), 4);
}

#[test]
fn keldysh_table_vacuum_rows() {
    let b_dag = Sigma { ladder: Ladder::Creation, rho: Rho::Plain };
    let b = Sigma { ladder: Ladder::Annihilation, rho: Rho::Plain };
    let bt_dag = Sigma { ladder: Ladder::Annihilation, rho: Rho::Tilde };
    let bt = Sigma { ladder: Ladder::Creation, rho: Rho::Tilde };
    let table = keldysh_table(0.0, 1.0, 1.0).unwrap();
    // pure contact term hbar
    assert!((table.value(b_dag, bt_dag, 0.7, 0.0).norm() - 1.0).abs() < 1e-12);
    assert!(table.value(b, bt, 0.7, 0.0).norm() < 1e-12);
    // the tilde row equals the plain row up to conjugation
    let t = keldysh_table(0.5, 1.0, 1.0).unwrap();
    for (x, y) in [(0.7, 0.0), (0.0, 0.7)] {
        let p = t.value(b_dag, b, x, y);
        let q = t.value(bt_dag, bt, x, y);
        assert!((q - p.conj()).norm() < 1e-12);
    }
}

#[test]
fn stationary_two_point_is_translation_invariant() {
    let (space, h) = s1_quartic(0.3);
    let l = gaussian_l(&space, 1.0, &[0.4]).unwrap();
    for rho in [Rho::Plain, Rho::Tilde] {
        let at = |s: f64| ggreen(&space, &h, &l, &[ins(0, 0.9 + s, Ladder::Annihilation, rho), ins(0, 0.2 + s, Ladder::Creation, Rho::Plain)], Route::Truncated).unwrap();
        assert!((at(0.0) - at(1.7)).norm() < 1e-9);
    }
}

#[test]
fn quantum_field_scales_with_hbar() {
    let (space, _) = s1();
    for route in [Route::Algebraic, Route::Truncated] {
        let n1 = operator_norm(&keldysh_basis(&space, 0, 1.0, route).unwrap().0);
        let n2 = operator_norm(&keldysh_basis(&space, 0, 0.5, route).unwrap().0);
        if route == Route::Algebraic {
            assert!((n1 / n2 - 2.0).abs() < 1e-10);
        }
        assert!(n1 > 0.0);
    }
    let (qu0, cl0) = keldysh_basis(&space, 0, 0.0, Route::Algebraic).unwrap();
    assert_eq!(qu0.max_abs(), 0.0);
    let cops = c_operators(&space, 0).unwrap();
    // phi_cl at hbar = 0 is c1 - c2
    assert!(cl0.sub(&cops.c1.sub(&cops.c2)).max_abs() < 1e-15);
}

#[test]
fn mixed_basis_scaling() {
    let (space, h) = s1();
    let value = |hbar: f64, fields: [Field; 2]| {
        let l = gaussian_l(&space, hbar, &[0.5]).unwrap();
        keldysh_ggreen(&space, &h, &l, &[(0, 0.3, fields[0]), (0, 0.9, fields[1])]).unwrap()
    };
    // latest insertion quantum: vanishes identically
    assert!(value(1.0, [Field::Classical, Field::Quantum]).norm() < 1e-12);
    // one quantum index: linear in hbar
    let r = value(0.5, [Field::Quantum, Field::Classical]).norm() / value(0.25, [Field::Quantum, Field::Classical]).norm();
    assert!((r - 2.0).abs() < 1e-8, "{r}");
    // classical pair survives the limit
    assert!(value(0.0, [Field::Classical, Field::Classical]).norm() > 0.1);
}

#[test]
fn hbar_probe_is_linear() {
    let (space, h) = s1_quartic(0.1);
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(1.0).unwrap()).unwrap();
    let mut psi = space.vacuum();
    for (i, x) in [0.6, 0.5, 0.4, 0.3].into_iter().enumerate() {
        psi[i] = c(x, 0.0);
    }
    let psi = &psi / c(psi.norm(), 0.0);
    let l = l_from_density(&space, &(&psi * psi.adjoint()), 1.0).unwrap();
    let p = hbar_probe(&cfg, &l, &[0.0, 1.0, 0.5, 0.25, 0.125], -1.0, 1.0).unwrap();
    assert_eq!(p.distances[0], 0.0);
    for r in &p.ratios {
        assert!((1.6..=2.4).contains(r), "{:?}", p.ratios);
    }
    assert!(zero_hbar_generator_is_finite(&space, &h).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rho_sum_vanishes_for_random_lists(t in proptest::collection::vec(-1.0f64..1.0, 3), lad in proptest::collection::vec(any::<bool>(), 3), n in 0.0f64..1.0) {
        let (space, h) = s1_quartic(0.2);
        let l = gaussian_l(&space, 1.0, &[n]).unwrap();
        let list: Vec<Insertion> = (0..3)
            .map(|i| ins(0, t[i], if lad[i] { Ladder::Creation } else { Ladder::Annihilation }, Rho::Plain))
            .collect();
        prop_assert!(rho_sum(&space, &h, &l, &list, Route::Truncated).unwrap().norm() < 1e-8);
    }
}
