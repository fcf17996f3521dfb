//! L-functionals of density matrices and the doubled operator algebra acting on them.
//!
//! A functional is stored through its polynomial coefficients
//! `L = sum coef(m, n) alpha^m (alpha*)^n`, kept as a `dim x dim` array indexed by the
//! occupation-style indices of the degree vectors `m` (rows) and `n` (columns).
//!
//! Operators on coefficient space come in two flavours (see [`Route`]):
//! the c-operator realization of the infinite algebra, polynomial in `hbar`, and the
//! exact image of left/right multiplication by truncated ladder matrices.

use nalgebra::ComplexField;
use num_complex::Complex;

use crate::fock::{FockSpace, NormalOrderedHamiltonian};
use crate::sparse::LOperator;
use crate::{cplx, creal, lit, CMatrix, CVector, Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PolyLFunctional<T: Real> {
    space: FockSpace<T>,
    hbar: T,
    coef: CMatrix<T>,
}

/// One serialized coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefRecord {
    pub m_vec: Vec<usize>,
    pub n_vec: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

impl<T: Real> PolyLFunctional<T> {
    pub fn from_coefficients(space: &FockSpace<T>, hbar: T, coef: CMatrix<T>) -> Result<Self> {
        let d = space.dim();
        if coef.nrows() != d || coef.ncols() != d {
            return Err(Error::Validation(format!("coefficient array must be {d}x{d}")));
        }
        Ok(Self { space: space.clone(), hbar, coef })
    }

    pub fn constant(space: &FockSpace<T>, hbar: T, c: Complex<T>) -> Self {
        let mut coef = CMatrix::zeros(space.dim(), space.dim());
        coef[(0, 0)] = c;
        Self { space: space.clone(), hbar, coef }
    }

    /// Flattened coefficient vector, index `m * dim + n`.
    pub fn from_vector(space: &FockSpace<T>, hbar: T, v: &CVector<T>) -> Self {
        let d = space.dim();
        let coef = CMatrix::from_fn(d, d, |m, n| v[m * d + n]);
        Self { space: space.clone(), hbar, coef }
    }

    pub fn to_vector(&self) -> CVector<T> {
        let d = self.space.dim();
        CVector::from_fn(d * d, |p, _| self.coef[(p / d, p % d)])
    }

    pub fn space(&self) -> &FockSpace<T> {
        &self.space
    }

    pub fn hbar(&self) -> T {
        self.hbar
    }

    pub fn coefficients(&self) -> &CMatrix<T> {
        &self.coef
    }

    pub fn coefficient(&self, m: &[usize], n: &[usize]) -> Complex<T> {
        self.coef[(self.space.index(m), self.space.index(n))]
    }

    pub fn value_at_zero(&self) -> Complex<T> {
        self.coef[(0, 0)]
    }

    pub fn distance(&self, other: &Self) -> T {
        (&self.coef - &other.coef).norm()
    }

    pub fn norm(&self) -> T {
        self.coef.norm()
    }

    /// Evaluates the polynomial at the point `alpha` (with `alpha*` its conjugate).
    pub fn evaluate(&self, alpha: &[Complex<T>]) -> Complex<T> {
        let d = self.space.dim();
        let mono = |idx: usize, conj: bool| {
            let occ = self.space.occupations(idx);
            let mut z = creal(T::one());
            for (k, &p) in occ.iter().enumerate() {
                let base = if conj { alpha[k].conj() } else { alpha[k] };
                for _ in 0..p {
                    z *= base;
                }
            }
            z
        };
        let am: Vec<Complex<T>> = (0..d).map(|i| mono(i, false)).collect();
        let an: Vec<Complex<T>> = (0..d).map(|i| mono(i, true)).collect();
        let mut s = creal(T::zero());
        for m in 0..d {
            for n in 0..d {
                s += self.coef[(m, n)] * am[m] * an[n];
            }
        }
        s
    }

    pub fn records(&self) -> Vec<CoefRecord> {
        let d = self.space.dim();
        let mut out = Vec::new();
        for m in 0..d {
            for n in 0..d {
                let z = self.coef[(m, n)];
                if z.re != T::zero() || z.im != T::zero() {
                    out.push(CoefRecord {
                        m_vec: self.space.occupations(m),
                        n_vec: self.space.occupations(n),
                        re: nalgebra::try_convert(z.re).unwrap_or(f64::NAN),
                        im: nalgebra::try_convert(z.im).unwrap_or(f64::NAN),
                    });
                }
            }
        }
        out
    }

    pub fn from_records(space: &FockSpace<T>, hbar: T, records: &[CoefRecord]) -> Result<Self> {
        let mut l = Self::constant(space, hbar, creal(T::zero()));
        for r in records {
            let ok = |v: &Vec<usize>| v.len() == space.mode_count() && v.iter().all(|&x| x <= space.n_max());
            if !ok(&r.m_vec) || !ok(&r.n_vec) {
                return Err(Error::Validation(format!("record {:?}/{:?} outside the representable degrees", r.m_vec, r.n_vec)));
            }
            l.coef[(space.index(&r.m_vec), space.index(&r.n_vec))] += cplx(lit(r.re), lit(r.im));
        }
        Ok(l)
    }
}

fn factorial<T: Real>(n: usize) -> T {
    (1..=n).fold(T::one(), |a, k| a * lit::<T>(k as f64))
}

/// Single-mode kernel-to-coefficient map; columns indexed by `j * D + i` for `K[j, i]`,
/// rows by `m * D + n`.
fn single_mode_l_map<T: Real>(levels: usize, hbar: T) -> CMatrix<T> {
    let d = levels;
    let mut map = CMatrix::zeros(d * d, d * d);
    for m in 0..d {
        for n in 0..d {
            let sign = if m % 2 == 0 { T::one() } else { -T::one() };
            let pre = sign / (factorial::<T>(m) * factorial::<T>(n)) * hbar.powf(lit::<T>((m + n) as f64 / 2.0));
            let mut r = 0;
            while m + r < d && n + r < d {
                let w = (factorial::<T>(m + r) * factorial::<T>(n + r)).sqrt() / factorial::<T>(r);
                map[(m * d + n, (n + r) * d + (m + r))] = creal(pre * w);
                r += 1;
            }
        }
    }
    map
}

/// Applies the same per-mode pair map to every mode of a `dim x dim` array whose row and
/// column indices carry one digit per mode.
fn apply_pair_map<T: Real>(space: &FockSpace<T>, input: &CMatrix<T>, map: &CMatrix<T>) -> CMatrix<T> {
    let mut cur = input.clone();
    for k in 0..space.mode_count() {
        cur = apply_pair_map_on_mode(space, &cur, map, k);
    }
    cur
}

fn apply_pair_map_on_mode<T: Real>(space: &FockSpace<T>, input: &CMatrix<T>, map: &CMatrix<T>, k: usize) -> CMatrix<T> {
    let dim = space.dim();
    let lv = space.levels();
    let s = space.stride(k);
    let mut out = CMatrix::zeros(dim, dim);
    for c in 0..dim {
        let ck = (c / s) % lv;
        let cb = c - ck * s;
        for r in 0..dim {
            let v = input[(r, c)];
            if v.re == T::zero() && v.im == T::zero() {
                continue;
            }
            let rk = (r / s) % lv;
            let rb = r - rk * s;
            let col = rk * lv + ck;
            for r2 in 0..lv {
                for c2 in 0..lv {
                    let w = map[(r2 * lv + c2, col)];
                    if w.re != T::zero() || w.im != T::zero() {
                        out[(rb + r2 * s, cb + c2 * s)] += w * v;
                    }
                }
            }
        }
    }
    out
}

/// `coef(m, n) = (-1)^|m| / (m! n!) Tr[(a+)^m a^n K]`; any square matrix is accepted.
pub fn l_from_density<T: Real>(space: &FockSpace<T>, k: &CMatrix<T>, hbar: T) -> Result<PolyLFunctional<T>> {
    let d = space.dim();
    if k.nrows() != d || k.ncols() != d {
        return Err(Error::Validation(format!("kernel must be {d}x{d}")));
    }
    let map = single_mode_l_map(space.levels(), hbar);
    let coef = apply_pair_map(space, k, &map);
    Ok(PolyLFunctional { space: space.clone(), hbar, coef })
}

/// Kernel reconstructed from a functional, with the condition number of the linear system.
#[derive(Debug, Clone)]
pub struct Reconstruction<T: Real> {
    pub kernel: CMatrix<T>,
    pub condition: T,
    /// Set when the condition number exceeds `1e8`.
    pub ill_conditioned: bool,
}

pub fn density_from_l<T: Real>(l: &PolyLFunctional<T>) -> Result<Reconstruction<T>> {
    let space = l.space();
    let map = single_mode_l_map(space.levels(), l.hbar());
    let sv = map.clone().singular_values();
    let smax = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    let smin = sv.iter().fold(smax, |a, &b| a.min(b));
    let single: T = smax / smin;
    let condition = single.powi(space.mode_count() as i32);
    let cond64: f64 = nalgebra::try_convert(condition).unwrap_or(f64::INFINITY);
    if !(cond64 < 1e14) {
        return Err(Error::Inversion { cond: cond64 });
    }
    let inv = map.try_inverse().ok_or(Error::Inversion { cond: cond64 })?;
    let kernel = apply_pair_map(space, l.coefficients(), &inv);
    Ok(Reconstruction { kernel, condition, ill_conditioned: cond64 > 1e8 })
}

/// Validated density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn new(matrix: CMatrix<T>) -> Result<Self> {
        let herm = (&matrix - matrix.adjoint()).norm();
        if herm > lit(1e-12) {
            return Err(Error::NotAState(format!("hermiticity defect {herm:?}")));
        }
        let tr = matrix.trace();
        if (tr - creal(T::one())).modulus() > lit(1e-12) {
            return Err(Error::NotAState(format!("trace {tr:?}")));
        }
        let ev = min_eigenvalue(&matrix);
        if ev < lit(-1e-10) {
            return Err(Error::NotAState(format!("eigenvalue {ev:?}")));
        }
        Ok(Self { matrix })
    }

    pub fn pure(psi: &CVector<T>) -> Result<Self> {
        let n = psi.norm();
        let v = psi / creal(n);
        Self::new(&v * v.adjoint())
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    let h = (m + m.adjoint()) * creal(lit::<T>(0.5));
    let ev = h.symmetric_eigenvalues();
    ev.iter().fold(T::max_value().unwrap_or(lit(1e300)), |a, &b| a.min(b))
}

/// Random positive unit-trace kernel supported on `support`, built from a sampler of
/// uniform numbers in `[0, 1)`.
pub fn random_kernel<T: Real>(dim: usize, support: &[usize], sample: &mut impl FnMut() -> f64) -> CMatrix<T> {
    let s = support.len();
    let g = CMatrix::<T>::from_fn(s, s, |_, _| cplx(lit(sample() - 0.5), lit(sample() - 0.5)));
    let p = &g * g.adjoint();
    let tr = p.trace();
    let p = p / tr;
    let mut k = CMatrix::zeros(dim, dim);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            k[(i, j)] = p[(a, b)];
        }
    }
    k
}

/// Coefficients of `prod_k exp(-n(k) alpha*(k) alpha(k))`, truncated at per-mode degree `n_max`.
pub fn gaussian_l<T: Real>(space: &FockSpace<T>, hbar: T, n: &[T]) -> Result<PolyLFunctional<T>> {
    if n.len() != space.mode_count() {
        return Err(Error::Validation(format!("{} occupations for {} modes", n.len(), space.mode_count())));
    }
    let d = space.dim();
    let mut coef = CMatrix::zeros(d, d);
    for i in 0..d {
        let occ = space.occupations(i);
        let mut c = T::one();
        for (k, &p) in occ.iter().enumerate() {
            c *= (-n[k]).powi(p as i32) / factorial::<T>(p);
        }
        coef[(i, i)] = creal(c);
    }
    Ok(PolyLFunctional { space: space.clone(), hbar, coef })
}

/// L-functional of the normalized one-particle state `sum_p f(p) a+(p)|0>`.
pub fn one_particle_l<T: Real>(space: &FockSpace<T>, hbar: T, f: &[Complex<T>]) -> Result<PolyLFunctional<T>> {
    if f.len() != space.mode_count() {
        return Err(Error::Validation("one-particle profile has the wrong length".into()));
    }
    let mut psi = CVector::zeros(space.dim());
    for (k, &fk) in f.iter().enumerate() {
        let mut occ = vec![0; space.mode_count()];
        occ[k] = 1;
        psi[space.index(&occ)] = fk;
    }
    let n = psi.norm();
    if n == T::zero() {
        return Err(Error::Validation("one-particle profile vanishes".into()));
    }
    let psi = psi / creal(n);
    l_from_density(space, &(&psi * psi.adjoint()), hbar)
}

/// `Tr[a+(k) a(k) K]`, read off the `(e_k, e_k)` coefficient.
pub fn expected_occupation<T: Real>(l: &PolyLFunctional<T>, k: usize) -> Result<T> {
    l.space().modes().check_mode(k)?;
    let z = l.value_at_zero();
    if (z - creal(T::one())).modulus() > lit(1e-8) {
        return Err(Error::NotAState(format!("L(0) = {z:?}")));
    }
    let mut e = vec![0; l.space().mode_count()];
    e[k] = 1;
    Ok(-l.coefficient(&e, &e).re)
}

/// Per-mode operator block on the `(m_k, n_k)` digit pair, index `m * D + n`.
pub type Block<T> = CMatrix<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum COp {
    /// Multiplication by `alpha*`.
    C1Dag,
    /// Multiplication by `alpha`.
    C2Dag,
    /// Derivative in `alpha*`.
    C1,
    /// Derivative in `alpha`.
    C2,
}

/// Single-mode c-operator block with degrees capped at `levels - 1` (overflow dropped).
pub fn c_block<T: Real>(op: COp, levels: usize) -> Block<T> {
    let d = levels;
    let mut b = CMatrix::zeros(d * d, d * d);
    for m in 0..d {
        for n in 0..d {
            let col = m * d + n;
            match op {
                COp::C1Dag if n + 1 < d => b[(m * d + n + 1, col)] = creal(T::one()),
                COp::C2Dag if m + 1 < d => b[((m + 1) * d + n, col)] = creal(T::one()),
                COp::C1 if n > 0 => b[(m * d + n - 1, col)] = creal(lit(n as f64)),
                COp::C2 if m > 0 => b[((m - 1) * d + n, col)] = creal(lit(m as f64)),
                _ => {}
            }
        }
    }
    b
}

/// Which realization of the doubled operators to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// c-operator formulas of the infinite algebra, polynomial in `hbar`, valid at `hbar = 0`.
    /// Exact for kernels whose dynamics never reaches the truncation edge.
    Algebraic,
    /// Exact images of left/right multiplication by the truncated ladder matrices; needs `hbar > 0`.
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Doubled {
    /// `b`: right multiplication by `a+`.
    B,
    /// `b+`: right multiplication by `a`.
    BDag,
    /// `b~`: left multiplication by `a`.
    BTilde,
    /// `b~+`: left multiplication by `a+`.
    BTildeDag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Doubled {
    /// Hilbert-space side and whether the ladder operator is a creation operator.
    pub fn action(self) -> (Side, bool) {
        match self {
            Doubled::B => (Side::Right, true),
            Doubled::BDag => (Side::Right, false),
            Doubled::BTilde => (Side::Left, false),
            Doubled::BTildeDag => (Side::Left, true),
        }
    }

    pub fn from_action(side: Side, creation: bool) -> Self {
        match (side, creation) {
            (Side::Right, true) => Doubled::B,
            (Side::Right, false) => Doubled::BDag,
            (Side::Left, false) => Doubled::BTilde,
            (Side::Left, true) => Doubled::BTildeDag,
        }
    }
}

/// Polynomial in `hbar` with block coefficients, lowest power first.
pub type HbarPoly<T> = Vec<Block<T>>;

fn poly_mul<T: Real>(a: &HbarPoly<T>, b: &HbarPoly<T>) -> HbarPoly<T> {
    let n = a[0].nrows();
    let mut out = vec![CMatrix::zeros(n, n); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// c-operator form of a doubled operator on one mode.
pub fn algebraic_doubled<T: Real>(op: Doubled, levels: usize) -> HbarPoly<T> {
    let z = CMatrix::zeros(levels * levels, levels * levels);
    let c = |o| c_block::<T>(o, levels);
    match op {
        Doubled::B => vec![-c(COp::C2), z],
        Doubled::BDag => vec![c(COp::C1), -c(COp::C2Dag)],
        Doubled::BTilde => vec![c(COp::C1), z],
        Doubled::BTildeDag => vec![-c(COp::C2), c(COp::C1Dag)],
    }
}

/// Pair action of left or right multiplication by a single-mode matrix, on `K[j, i]` pairs.
fn multiplication_pair_map<T: Real>(a: &CMatrix<T>, side: Side) -> CMatrix<T> {
    let d = a.nrows();
    let mut r = CMatrix::zeros(d * d, d * d);
    for j in 0..d {
        for i in 0..d {
            for l in 0..d {
                match side {
                    Side::Right => r[(j * d + i, j * d + l)] += a[(l, i)],
                    Side::Left => r[(j * d + i, l * d + i)] += a[(j, l)],
                }
            }
        }
    }
    r
}

/// Exact single-mode image of a doubled operator under the truncated L-map.
pub fn truncated_doubled<T: Real>(op: Doubled, levels: usize, hbar: T) -> Result<Block<T>> {
    if !(hbar > T::zero()) {
        return Err(Error::Validation("the truncated route needs hbar > 0".into()));
    }
    let map = single_mode_l_map(levels, hbar);
    let inv = map.clone().try_inverse().ok_or(Error::Inversion { cond: f64::INFINITY })?;
    let mut a = CMatrix::zeros(levels, levels);
    for n in 1..levels {
        a[(n - 1, n)] = creal((hbar * lit::<T>(n as f64)).sqrt());
    }
    let (side, creation) = op.action();
    let ladder = if creation { a.adjoint() } else { a };
    let block = &map * multiplication_pair_map(&ladder, side) * inv;
    let scale = block.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()));
    let tol = scale * lit(1e-13);
    Ok(block.map(|z| if z.modulus() <= tol { creal(T::zero()) } else { z }))
}

/// Builds the operator `prod_k B_k` where each listed block acts on the digit pair of its mode.
pub fn modewise_operator<T: Real>(mode_count: usize, levels: usize, factors: &[(usize, Block<T>)]) -> LOperator<T> {
    let dim = levels.pow(mode_count as u32);
    let n = dim * dim;
    let stride = |k: usize| levels.pow((mode_count - 1 - k) as u32);
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut cur: Vec<(usize, Complex<T>)> = Vec::new();
    let mut next: Vec<(usize, Complex<T>)> = Vec::new();
    for p in 0..n {
        cur.clear();
        cur.push((p, creal(T::one())));
        for (k, block) in factors {
            let s = stride(*k);
            next.clear();
            for &(q, w) in &cur {
                let m = q / dim;
                let nn = q % dim;
                let mk = (m / s) % levels;
                let nk = (nn / s) % levels;
                let col = mk * levels + nk;
                for r in 0..levels * levels {
                    let b = block[(r, col)];
                    if b.re != T::zero() || b.im != T::zero() {
                        let (m2, n2) = (r / levels, r % levels);
                        let q2 = (m - mk * s + m2 * s) * dim + (nn - nk * s + n2 * s);
                        next.push((q2, w * b));
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
            if cur.is_empty() {
                break;
            }
        }
        for &(q, w) in &cur {
            rows.push(q);
            cols.push(p);
            vals.push(w);
        }
    }
    LOperator::from_triplets(n, &rows, &cols, &vals)
}

/// The four c-operators of mode `k` as coefficient-space operators.
#[derive(Debug, Clone)]
pub struct COperators<T: Real> {
    pub c1_dag: LOperator<T>,
    pub c2_dag: LOperator<T>,
    pub c1: LOperator<T>,
    pub c2: LOperator<T>,
}

pub fn c_operators<T: Real>(space: &FockSpace<T>, k: usize) -> Result<COperators<T>> {
    space.modes().check_mode(k)?;
    let (n, lv) = (space.mode_count(), space.levels());
    let op = |o| modewise_operator(n, lv, &[(k, c_block::<T>(o, lv))]);
    Ok(COperators { c1_dag: op(COp::C1Dag), c2_dag: op(COp::C2Dag), c1: op(COp::C1), c2: op(COp::C2) })
}

/// Norm of the part of `op`'s output that would leave the representable degree range,
/// measured for the multiplication operators (derivatives never overflow).
pub fn c_overflow<T: Real>(l: &PolyLFunctional<T>, op: COp, k: usize) -> T {
    let space = l.space();
    let top = space.n_max();
    let d = space.dim();
    let mut s = T::zero();
    for m in 0..d {
        for n in 0..d {
            let hit = match op {
                COp::C1Dag => space.occupation(n, k) == top,
                COp::C2Dag => space.occupation(m, k) == top,
                _ => false,
            };
            if hit {
                s += l.coefficients()[(m, n)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

#[derive(Debug, Clone)]
pub struct DoubledOperators<T: Real> {
    pub b: LOperator<T>,
    pub b_dag: LOperator<T>,
    pub b_tilde: LOperator<T>,
    pub b_tilde_dag: LOperator<T>,
}

impl<T: Real> DoubledOperators<T> {
    pub fn get(&self, op: Doubled) -> &LOperator<T> {
        match op {
            Doubled::B => &self.b,
            Doubled::BDag => &self.b_dag,
            Doubled::BTilde => &self.b_tilde,
            Doubled::BTildeDag => &self.b_tilde_dag,
        }
    }
}

/// Single-mode block of a doubled operator evaluated at `hbar` for the given route.
pub fn doubled_block<T: Real>(op: Doubled, levels: usize, hbar: T, route: Route) -> Result<Block<T>> {
    match route {
        Route::Algebraic => {
            let p = algebraic_doubled::<T>(op, levels);
            Ok(&p[0] + &p[1] * creal(hbar))
        }
        Route::Truncated => truncated_doubled(op, levels, hbar),
    }
}

pub fn doubled_operator<T: Real>(space: &FockSpace<T>, op: Doubled, k: usize, hbar: T, route: Route) -> Result<LOperator<T>> {
    space.modes().check_mode(k)?;
    let block = doubled_block(op, space.levels(), hbar, route)?;
    Ok(modewise_operator(space.mode_count(), space.levels(), &[(k, block)]))
}

pub fn doubled_operators<T: Real>(space: &FockSpace<T>, k: usize, hbar: T, route: Route) -> Result<DoubledOperators<T>> {
    let get = |op| doubled_operator(space, op, k, hbar, route);
    Ok(DoubledOperators { b: get(Doubled::B)?, b_dag: get(Doubled::BDag)?, b_tilde: get(Doubled::BTilde)?, b_tilde_dag: get(Doubled::BTildeDag)? })
}

/// Coefficient-space image of `K -> B K` (left) or `K -> K B` (right) for an arbitrary
/// matrix `B`, assembled column by column through the kernel map.
pub fn multiplication_operator<T: Real>(space: &FockSpace<T>, hbar: T, b: &CMatrix<T>, side: Side) -> Result<LOperator<T>> {
    let d = space.dim();
    let n = d * d;
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for p in 0..n {
        let mut e = CVector::zeros(n);
        e[p] = creal(T::one());
        let l = PolyLFunctional::from_vector(space, hbar, &e);
        let k = density_from_l(&l)?.kernel;
        let k2 = match side {
            Side::Left => b * k,
            Side::Right => k * b,
        };
        let out = l_from_density(space, &k2, hbar)?.to_vector();
        for (q, z) in out.iter().enumerate() {
            if z.re != T::zero() || z.im != T::zero() {
                rows.push(q);
                cols.push(p);
                vals.push(*z);
            }
        }
    }
    Ok(LOperator::from_triplets(n, &rows, &cols, &vals))
}

/// Generator of L-functional evolution, `dL/dt = (G_0 + h G_V) L`.
///
/// `G_0` is diagonal in the monomial basis, `(G_0 L)(m, n) = i eps.(m - n) L(m, n)`.
#[derive(Debug, Clone)]
pub struct LGenerator<T: Real> {
    space: FockSpace<T>,
    hbar: T,
    route: Route,
    free_frequency: Vec<T>,
    interaction: LOperator<T>,
    /// `hbar`-power components of `H~ - H^` before the exact cancellation (algebraic route).
    raw_powers: Vec<LOperator<T>>,
}

impl<T: Real> LGenerator<T> {
    pub fn build(space: &FockSpace<T>, h: &NormalOrderedHamiltonian<T>, hbar: T, route: Route) -> Result<Self> {
        if route == Route::Truncated && !(hbar > T::zero()) {
            return Err(Error::Validation("the truncated route needs hbar > 0".into()));
        }
        if hbar < T::zero() {
            return Err(Error::Validation("hbar must be non-negative".into()));
        }
        let lv = space.levels();
        let n = space.mode_count();
        let d = space.dim();
        let mut eps = vec![T::zero(); n];
        for t in h.free_part().terms {
            space.modes().check_mode(t.creators[0])?;
            eps[t.creators[0]] += t.coeff.re;
        }
        let free_frequency = (0..d * d)
            .map(|p| {
                let (m, nn) = (p / d, p % d);
                (0..n).fold(T::zero(), |acc, k| {
                    acc + eps[k] * (lit::<T>(space.occupation(m, k) as f64) - lit::<T>(space.occupation(nn, k) as f64))
                })
            })
            .collect();

        let poly = |op: Doubled| -> Result<HbarPoly<T>> {
            match route {
                Route::Algebraic => Ok(algebraic_doubled(op, lv)),
                Route::Truncated => Ok(vec![truncated_doubled(op, lv, hbar)?]),
            }
        };
        let polys = [poly(Doubled::B)?, poly(Doubled::BDag)?, poly(Doubled::BTilde)?, poly(Doubled::BTildeDag)?];

        let inter = h.interaction_part();
        let mut raw: Vec<LOperator<T>> = Vec::new();
        for t in &inter.terms {
            for &k in t.creators.iter().chain(&t.annihilators) {
                space.modes().check_mode(k)?;
            }
            // L_{HK}: left multiplications, the rightmost annihilator acts first.
            let mut left: Vec<(usize, Doubled)> = Vec::new();
            for &l in t.annihilators.iter().rev() {
                left.push((l, Doubled::BTilde));
            }
            for &k in t.creators.iter().rev() {
                left.push((k, Doubled::BTildeDag));
            }
            // L_{KH}: right multiplications, the leftmost creator acts first.
            let mut right: Vec<(usize, Doubled)> = Vec::new();
            for &k in &t.creators {
                right.push((k, Doubled::B));
            }
            for &l in &t.annihilators {
                right.push((l, Doubled::BDag));
            }
            for (word, sign) in [(left, T::one()), (right, -T::one())] {
                let parts = word_powers(n, lv, &word, &polys);
                for (p, op) in parts.into_iter().enumerate() {
                    let op = op.scale(t.coeff * sign);
                    if raw.len() <= p {
                        raw.resize(p + 1, LOperator::zeros(d * d));
                    }
                    raw[p] = raw[p].add(&op);
                }
            }
        }
        let mut interaction = LOperator::zeros(d * d);
        match route {
            Route::Algebraic => {
                // (1/(i hbar)) sum_p hbar^p D_p with D_0 = 0 identically: lower the power instead of dividing.
                let mut scale = creal(T::one());
                for dp in raw.iter().skip(1) {
                    interaction = interaction.add(&dp.scale(scale * cplx(T::zero(), -T::one())));
                    scale *= creal(hbar);
                }
            }
            Route::Truncated => {
                if let Some(d0) = raw.first() {
                    interaction = d0.scale(cplx(T::zero(), -T::one() / hbar));
                }
            }
        }
        Ok(Self { space: space.clone(), hbar, route, free_frequency, interaction, raw_powers: raw })
    }

    pub fn space(&self) -> &FockSpace<T> {
        &self.space
    }

    pub fn hbar(&self) -> T {
        self.hbar
    }

    pub fn route(&self) -> Route {
        self.route
    }

    /// Frequencies `eps.(m - n)` of the free generator, one per flattened coefficient.
    pub fn free_frequency(&self) -> &[T] {
        &self.free_frequency
    }

    /// `G_V`, already including the coupling and the `1/(i hbar)` factor.
    pub fn interaction(&self) -> &LOperator<T> {
        &self.interaction
    }

    /// The `hbar^0` component of `H~ - H^`, which the algebraic route drops; it vanishes identically.
    pub fn cancelled_part(&self) -> Option<&LOperator<T>> {
        match self.route {
            Route::Algebraic => self.raw_powers.first(),
            Route::Truncated => None,
        }
    }

    pub fn free_operator(&self) -> LOperator<T> {
        let diag = CVector::from_iterator(self.free_frequency.len(), self.free_frequency.iter().map(|&w| cplx(T::zero(), w)));
        LOperator::diagonal(&diag)
    }

    /// `G_0 + h G_V` as one operator.
    pub fn total(&self, h: T) -> LOperator<T> {
        self.free_operator().add(&self.interaction.scale(creal(h)))
    }

    pub fn apply(&self, h: T, x: &CVector<T>) -> CVector<T> {
        let mut y = self.interaction.apply(x) * creal(h);
        for (p, w) in self.free_frequency.iter().enumerate() {
            y[p] += cplx(T::zero(), *w) * x[p];
        }
        y
    }
}

fn word_powers<T: Real>(
    mode_count: usize,
    levels: usize,
    word: &[(usize, Doubled)],
    polys: &[HbarPoly<T>; 4],
) -> Vec<LOperator<T>> {
    let dim = levels.pow(mode_count as u32);
    // Per-mode products in application order (later factors multiply from the left).
    let mut per_mode: Vec<(usize, HbarPoly<T>)> = Vec::new();
    for &(k, op) in word {
        let p = polys[op as usize].clone();
        match per_mode.iter_mut().find(|(m, _)| *m == k) {
            Some((_, acc)) => *acc = poly_mul(&p, acc),
            None => per_mode.push((k, p)),
        }
    }
    let max_deg: usize = per_mode.iter().map(|(_, p)| p.len() - 1).sum();
    let mut out = vec![LOperator::zeros(dim * dim); max_deg + 1];
    let mut choice = vec![0usize; per_mode.len()];
    loop {
        let factors: Vec<(usize, Block<T>)> = per_mode.iter().zip(&choice).map(|((k, p), &c)| (*k, p[c].clone())).collect();
        let nonzero = factors.iter().all(|(_, b)| b.iter().any(|z| z.re != T::zero() || z.im != T::zero()));
        if nonzero {
            let deg: usize = choice.iter().sum();
            out[deg] = out[deg].add(&modewise_operator(mode_count, levels, &factors));
        }
        let mut i = 0;
        loop {
            if i == choice.len() {
                return out;
            }
            choice[i] += 1;
            if choice[i] < per_mode[i].1.len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Extends a functional to a larger per-mode degree bound (zero padding).
pub fn embed_coefficients<T: Real>(l: &PolyLFunctional<T>, target: &FockSpace<T>) -> Result<PolyLFunctional<T>> {
    let src = l.space();
    if target.mode_count() != src.mode_count() || target.n_max() < src.n_max() {
        return Err(Error::Validation("embedding target must have the same modes and a larger cutoff".into()));
    }
    let d = src.dim();
    let mut coef = CMatrix::zeros(target.dim(), target.dim());
    for m in 0..d {
        for n in 0..d {
            coef[(target.index(&src.occupations(m)), target.index(&src.occupations(n)))] = l.coefficients()[(m, n)];
        }
    }
    Ok(PolyLFunctional { space: target.clone(), hbar: l.hbar(), coef })
}

/// Weight that `G_V` pushes beyond the degree bound, measured on an enlarged coefficient
/// space with enough headroom for every term (algebraic route only).
pub fn generator_overflow<T: Real>(h: &NormalOrderedHamiltonian<T>, l: &PolyLFunctional<T>) -> Result<T> {
    let src = l.space();
    let pad = h.terms.iter().map(|t| t.creators.len().max(t.annihilators.len())).max().unwrap_or(1).max(1);
    let big = crate::fock::build_space_capped(src.modes().clone(), src.n_max() + pad, usize::MAX)?;
    let gen = LGenerator::build(&big, h, l.hbar(), Route::Algebraic)?;
    let x = embed_coefficients(l, &big)?.to_vector();
    let y = gen.apply(T::one(), &x);
    let bd = big.dim();
    let mut s = T::zero();
    for (p, z) in y.iter().enumerate() {
        let (m, n) = (p / bd, p % bd);
        let outside = (0..src.mode_count()).any(|k| big.occupation(m, k) > src.n_max() || big.occupation(n, k) > src.n_max());
        if outside {
            s += z.norm_sqr();
        }
    }
    Ok(s.sqrt())
}
