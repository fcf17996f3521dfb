mod common;

use approx::assert_abs_diff_eq;
use common::*;
use lfunc_core::dressing::*;
use lfunc_core::evolve::*;
use lfunc_core::fock::*;
use lfunc_core::lfun::*;
use lfunc_core::{Error, Matrix64};

fn n2_sector(space: &FockSpace<f64>) -> Vec<usize> {
    sector_indices(space, Sector::Number(2)).unwrap()
}

#[test]
fn sectors() {
    let (space, _) = s2();
    assert_eq!(n2_sector(&space).len(), 3);
    let (space3, _) = s3();
    let total: usize = (0..3).map(|q| sector_indices(&space3, Sector::Momentum(q)).unwrap().len()).sum();
    assert_eq!(total, 27);
    assert_eq!(natural_sector(&space3, space3.index(&[0, 1, 0])).unwrap(), Sector::Momentum(1));
    assert_eq!(natural_sector(&space, space.index(&[1, 1])).unwrap(), Sector::Number(2));
}

#[test]
fn track_follows_the_free_state() {
    let (space, h) = s2();
    let fam = Family::from_hamiltonian(&space, &h, 1.0).unwrap();
    let idx = n2_sector(&space);
    let tr = eigen_track(&fam, &idx, &Start::Lowest, &uniform_grid(50), TrackOptions::default()).unwrap();
    assert_abs_diff_eq!(tr.energy[0], 2.0, epsilon = 1e-12);
    assert!(tr.min_gap() > 0.1);
    assert_eq!(tr.g.len(), 51);
}

#[test]
fn grid_must_increase() {
    let (space, h) = s2();
    let fam = Family::from_hamiltonian(&space, &h, 1.0).unwrap();
    let err = eigen_track(&fam, &[0, 1], &Start::Lowest, &[0.0, 0.5, 0.4], TrackOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
}

#[test]
fn level_crossing_is_detected() {
    let h0 = diagonal_problem(&[0.0, 1.0]);
    let v = diagonal_problem(&[2.0, 0.0]);
    let fam = Family::new(h0, v).unwrap();
    let err = eigen_track(&fam, &[0, 1], &Start::Lowest, &uniform_grid(20), TrackOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Degeneracy { .. }));
}

#[test]
fn exact_eigenstates_dress_trivially() {
    let (space, h) = s2();
    let fam = Family::from_hamiltonian(&space, &h, 1.0).unwrap();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.2).unwrap()).unwrap();
    let idx = sector_indices(&space, Sector::Number(1)).unwrap();
    let r = dress_state(&fam, &idx, &Start::Lowest, &cfg).unwrap();
    assert!(1.0 - r.fidelity < 1e-10);
    assert!(r.phase_mismatch < 1e-8);
}

#[test]
fn dressing_improves_as_the_rate_drops() {
    let (space, h) = s2();
    let fam = Family::from_hamiltonian(&space, &h, 1.0).unwrap();
    let idx = n2_sector(&space);
    let errs: Vec<f64> = [0.2, 0.1]
        .iter()
        .map(|&a| {
            let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(a).unwrap()).unwrap();
            1.0 - dress_state(&fam, &idx, &Start::Lowest, &cfg).unwrap().fidelity
        })
        .collect();
    assert!(errs[1] < errs[0], "{errs:?}");
}

#[test]
fn intermediate_dressing() {
    let (space, h) = s2();
    let fam = Family::from_hamiltonian(&space, &h, 1.0).unwrap();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.1).unwrap()).unwrap();
    let r = dress_intermediate(&fam, &n2_sector(&space), &Start::Lowest, &cfg, 0.5).unwrap();
    assert_abs_diff_eq!(r.g, 0.5, epsilon = 1e-12);
    assert!(r.fidelity > 0.99);
}

#[test]
fn l_dressing_rejects_non_stationary_input() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.2).unwrap()).unwrap().with_route(Route::Truncated);
    let psi = (space.basis_vector(space.index(&[1, 0])) + space.basis_vector(space.index(&[0, 1]))) * c(0.5f64.sqrt(), 0.0);
    let l = l_from_density(&space, &(&psi * psi.adjoint()), 1.0).unwrap();
    assert!(matches!(dress_l(&l, &cfg), Err(Error::Validation(_))));
}

#[test]
fn l_dressing_of_an_exact_state() {
    let (space, h) = s2();
    let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(0.2).unwrap()).unwrap().with_route(Route::Truncated);
    let v = space.basis_vector(space.index(&[1, 0]));
    let l = l_from_density(&space, &(&v * v.adjoint()), 1.0).unwrap();
    let r = dress_l(&l, &cfg).unwrap();
    assert!(r.stationarity_residual < 1e-8);
    assert!(r.min_eigenvalue.unwrap() > -1e-10);
}

#[test]
fn aqc_success_grows_with_slower_schedules() {
    let space = build_space(ModeSet::new(vec![1.0, 1.0]).unwrap(), 1).unwrap();
    let driver = aqc_driver(&space, 1.0).unwrap();
    let problem = diagonal_problem(&[2.0, 0.5, 3.1, 1.7]);
    let h = NormalOrderedHamiltonian::free(space.modes());
    let mut last = 0.0;
    for a in [0.2, 0.1, 0.05] {
        let cfg = EvolutionConfig::new(&space, &h, 1.0, Schedule::new(a).unwrap()).unwrap();
        let r = aqc_solve(&problem, &driver, &cfg).unwrap();
        assert_eq!(r.minimizers, vec![1]);
        assert!(r.success >= last);
        last = r.success;
    }
    assert!(last > 0.99);
}

#[test]
fn interpolating_family_endpoints() {
    let a = diagonal_problem(&[1.0, 2.0]);
    let b = diagonal_problem(&[3.0, -1.0]);
    let fam = Family::interpolating(a.clone(), b.clone()).unwrap();
    assert!((fam.at(0.0) - a).norm() < 1e-15);
    assert!((fam.at(1.0) - b).norm() < 1e-15);
    assert!(Family::new(Matrix64::zeros(2, 2), Matrix64::zeros(3, 3)).is_err());
}
