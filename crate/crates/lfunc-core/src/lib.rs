//! L-functional dynamics on finite-mode, occupation-truncated bosonic systems.
//!
//! The numerical core (`fock`, `lfun`, `evolve`) is generic over the real
//! scalar; the physics drivers built on top of it work in `f64`.

pub mod dressing;
pub mod error;
pub mod evolve;
pub mod fock;
pub mod green;
pub mod lfun;
pub mod scatter;
pub mod sparse;

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;

pub use error::{Error, Result};

/// Real scalar usable throughout the numerical core.
pub trait Real: RealField + Copy + num_traits::FromPrimitive + std::fmt::Debug {}

impl Real for f32 {}
impl Real for f64 {}

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert::<f64, T>(x)
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn creal<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

pub type Complex64 = Complex<f64>;
pub type Matrix64 = CMatrix<f64>;
pub type Vector64 = CVector<f64>;
pub type ModeSet64 = fock::ModeSet<f64>;
pub type FockSpace64 = fock::FockSpace<f64>;
pub type Hamiltonian64 = fock::NormalOrderedHamiltonian<f64>;
pub type PolyL64 = lfun::PolyLFunctional<f64>;
pub type LOperator64 = sparse::LOperator<f64>;
pub type LGenerator64 = lfun::LGenerator<f64>;
pub type Schedule64 = evolve::Schedule<f64>;
pub type EvolutionConfig64 = evolve::EvolutionConfig<f64>;
