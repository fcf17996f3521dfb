#![allow(dead_code)]

use lfunc_core::fock::{build_space, FockSpace, ModeSet, NormalOrderedHamiltonian};
use lfunc_core::{Complex64, Matrix64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sampler(seed: u64) -> impl FnMut() -> f64 {
    let mut r = rng(seed);
    move || r.gen::<f64>()
}

/// One mode, eps = 1, n_max = 3.
pub fn s1() -> (FockSpace<f64>, NormalOrderedHamiltonian<f64>) {
    let modes = ModeSet::new(vec![1.0]).unwrap();
    let space = build_space(modes.clone(), 3).unwrap();
    (space, NormalOrderedHamiltonian::free(&modes))
}

/// S1 with the quartic `g a+ a+ a a`.
pub fn s1_quartic(g: f64) -> (FockSpace<f64>, NormalOrderedHamiltonian<f64>) {
    let (space, _) = s1();
    let mut h = NormalOrderedHamiltonian::with_free(space.modes(), g);
    h.push(vec![0, 0], vec![0, 0], c(1.0, 0.0));
    (space, h)
}

/// Two modes, eps = (1.0, 1.3), all-index quartic, n_max = 2.
pub fn s2() -> (FockSpace<f64>, NormalOrderedHamiltonian<f64>) {
    let modes = ModeSet::new(vec![1.0, 1.3]).unwrap();
    let space = build_space(modes.clone(), 2).unwrap();
    let mut h = NormalOrderedHamiltonian::with_free(&modes, 0.1);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    h.push(vec![i, j], vec![k, l], c(1.0, 0.0));
                }
            }
        }
    }
    (space, h)
}

/// Three modes with labels (0, 1, 2) mod 3, cubic and density-density quartic terms.
pub fn s3() -> (FockSpace<f64>, NormalOrderedHamiltonian<f64>) {
    let modes = ModeSet::new(vec![1.0, 1.3, 1.3]).unwrap().with_momentum(vec![0, 1, 2], 3).unwrap();
    let space = build_space(modes.clone(), 2).unwrap();
    let mut h = NormalOrderedHamiltonian::with_free(&modes, 0.1);
    for (cr, an) in [(vec![1, 2], vec![0]), (vec![0, 1], vec![1]), (vec![2, 2], vec![1]), (vec![1, 1], vec![2])] {
        h.push_hermitian(cr, an, c(1.0, 0.0));
    }
    h.push_hermitian(vec![0, 1, 2], vec![], c(1.0, 0.0));
    for i in 0..3 {
        for j in 0..3 {
            h.push(vec![i, j], vec![i, j], c(0.5, 0.0));
        }
    }
    (space, h)
}

pub fn max_abs(m: &Matrix64) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
