//! Sparse linear operators on flattened coefficient arrays.

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex;

use crate::{creal, CMatrix, CVector, Real};

/// Linear map on a coefficient space, stored in compressed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LOperator<T: Real> {
    csr: CsrMatrix<Complex<T>>,
}

impl<T: Real> LOperator<T> {
    pub fn from_triplets(n: usize, rows: &[usize], cols: &[usize], vals: &[Complex<T>]) -> Self {
        let mut coo = CooMatrix::new(n, n);
        for ((&r, &c), &v) in rows.iter().zip(cols).zip(vals) {
            if v.re != T::zero() || v.im != T::zero() {
                coo.push(r, c, v);
            }
        }
        Self { csr: CsrMatrix::from(&coo) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { csr: CsrMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        Self { csr: CsrMatrix::identity(n) }
    }

    pub fn diagonal(d: &CVector<T>) -> Self {
        let idx: Vec<usize> = (0..d.len()).collect();
        Self::from_triplets(d.len(), &idx, &idx, d.as_slice())
    }

    pub fn from_dense(m: &CMatrix<T>) -> Self {
        let mut coo = CooMatrix::new(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v.re != T::zero() || v.im != T::zero() {
                    coo.push(i, j, v);
                }
            }
        }
        Self { csr: CsrMatrix::from(&coo) }
    }

    pub fn dim(&self) -> usize {
        self.csr.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn csr(&self) -> &CsrMatrix<Complex<T>> {
        &self.csr
    }

    pub fn apply(&self, x: &CVector<T>) -> CVector<T> {
        let mut y = CVector::zeros(self.dim());
        self.apply_into(x.as_slice(), y.as_mut_slice(), creal(T::one()), false);
        y
    }

    /// `y = s * A x` (or `y += s * A x` when `accumulate`).
    pub fn apply_into(&self, x: &[Complex<T>], y: &mut [Complex<T>], s: Complex<T>, accumulate: bool) {
        let offsets = self.csr.row_offsets();
        let cols = self.csr.col_indices();
        let vals = self.csr.values();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = Complex::new(T::zero(), T::zero());
            for p in offsets[i]..offsets[i + 1] {
                acc += vals[p] * x[cols[p]];
            }
            if accumulate {
                *yi += acc * s;
            } else {
                *yi = acc * s;
            }
        }
    }

    /// Applies the operator to every column of `x`.
    pub fn apply_cols(&self, x: &CMatrix<T>) -> CMatrix<T> {
        let mut y = CMatrix::zeros(self.dim(), x.ncols());
        for j in 0..x.ncols() {
            let xc = x.column(j).clone_owned();
            let mut col = y.column_mut(j);
            self.apply_into(xc.as_slice(), col.as_mut_slice(), creal(T::one()), false);
        }
        y
    }

    /// Operator product `self * rhs` (rhs acts first).
    pub fn compose(&self, rhs: &Self) -> Self {
        Self { csr: &self.csr * &rhs.csr }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Self { csr: &self.csr + &rhs.csr }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        Self { csr: &self.csr - &rhs.csr }
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        let mut csr = self.csr.clone();
        for v in csr.values_mut() {
            *v *= s;
        }
        Self { csr }
    }

    pub fn commutator(&self, rhs: &Self) -> Self {
        self.compose(rhs).sub(&rhs.compose(self))
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> T {
        let mut sums = vec![T::zero(); self.dim()];
        for (_, c, v) in self.csr.triplet_iter() {
            sums[c] += v.norm_sqr().sqrt();
        }
        sums.into_iter().fold(T::zero(), |a, b| a.max(b))
    }

    /// Frobenius norm of the stored entries.
    pub fn frobenius(&self) -> T {
        self.csr.values().iter().fold(T::zero(), |a, v| a + v.norm_sqr()).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.csr.values().iter().fold(T::zero(), |a, v| a.max(v.norm_sqr().sqrt()))
    }

    pub fn to_dense(&self) -> CMatrix<T> {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in self.csr.triplet_iter() {
            m[(i, j)] += *v;
        }
        m
    }

    /// Drops stored entries with modulus at most `tol`.
    pub fn pruned(&self, tol: T) -> Self {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for (i, j, v) in self.csr.triplet_iter() {
            if v.norm_sqr().sqrt() > tol {
                rows.push(i);
                cols.push(j);
                vals.push(*v);
            }
        }
        Self::from_triplets(self.dim(), &rows, &cols, &vals)
    }
}
