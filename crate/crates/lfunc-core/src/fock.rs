//! Truncated Fock space, ladder operators, Weyl elements and Hamiltonian assembly.

use std::collections::BTreeMap;

use nalgebra::ComplexField;
use num_complex::Complex;

use crate::{creal, lit, CMatrix, CVector, Error, Real, Result};

pub const DEFAULT_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumLabels {
    pub labels: Vec<u32>,
    pub modulus: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet<T: Real> {
    energies: Vec<T>,
    momentum: Option<MomentumLabels>,
}

impl<T: Real> ModeSet<T> {
    pub fn new(energies: Vec<T>) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::Validation("mode set is empty".into()));
        }
        if let Some(k) = energies.iter().position(|e| !(*e > T::zero())) {
            return Err(Error::Validation(format!("dispersion of mode {k} is not positive")));
        }
        Ok(Self { energies, momentum: None })
    }

    pub fn with_momentum(mut self, labels: Vec<u32>, modulus: u32) -> Result<Self> {
        if modulus == 0 {
            return Err(Error::Validation("momentum modulus must be positive".into()));
        }
        if labels.len() != self.energies.len() {
            return Err(Error::Validation(format!(
                "{} momentum labels for {} modes",
                labels.len(),
                self.energies.len()
            )));
        }
        if let Some(k) = labels.iter().position(|&p| p >= modulus) {
            return Err(Error::Validation(format!("label of mode {k} is not a residue mod {modulus}")));
        }
        self.momentum = Some(MomentumLabels { labels, modulus });
        Ok(self)
    }

    pub fn mode_count(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn energy(&self, k: usize) -> T {
        self.energies[k]
    }

    pub fn momentum(&self) -> Option<&MomentumLabels> {
        self.momentum.as_ref()
    }

    pub fn check_mode(&self, k: usize) -> Result<()> {
        if k < self.energies.len() {
            Ok(())
        } else {
            Err(Error::InvalidMode { index: k, count: self.energies.len() })
        }
    }
}

/// Occupation-truncated Fock space; mode 0 is the most significant digit of the basis index.
#[derive(Debug, Clone, PartialEq)]
pub struct FockSpace<T: Real> {
    modes: ModeSet<T>,
    n_max: usize,
    dim: usize,
    strides: Vec<usize>,
}

pub fn build_space<T: Real>(modes: ModeSet<T>, n_max: usize) -> Result<FockSpace<T>> {
    build_space_capped(modes, n_max, DEFAULT_DIM_CAP)
}

pub fn build_space_capped<T: Real>(modes: ModeSet<T>, n_max: usize, cap: usize) -> Result<FockSpace<T>> {
    if n_max < 1 {
        return Err(Error::Validation("n_max must be at least 1".into()));
    }
    let n = modes.mode_count();
    let levels = n_max + 1;
    let mut dim: usize = 1;
    for _ in 0..n {
        dim = dim.checked_mul(levels).ok_or(Error::Sizing { dim: usize::MAX, cap })?;
        if dim > cap {
            return Err(Error::Sizing { dim, cap });
        }
    }
    let mut strides = vec![1; n];
    for k in (0..n.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * levels;
    }
    Ok(FockSpace { modes, n_max, dim, strides })
}

impl<T: Real> FockSpace<T> {
    pub fn modes(&self) -> &ModeSet<T> {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.mode_count()
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self, occ: &[usize]) -> usize {
        occ.iter().zip(&self.strides).map(|(n, s)| n * s).sum()
    }

    pub fn occupations(&self, idx: usize) -> Vec<usize> {
        self.strides.iter().map(|s| (idx / s) % self.levels()).collect()
    }

    pub fn occupation(&self, idx: usize, k: usize) -> usize {
        (idx / self.strides[k]) % self.levels()
    }

    pub fn stride(&self, k: usize) -> usize {
        self.strides[k]
    }

    pub fn total_number(&self, idx: usize) -> usize {
        self.occupations(idx).iter().sum()
    }

    /// Occupations all at most `n_max - 1`: every ladder identity holds exactly here.
    pub fn is_cutoff_safe(&self, idx: usize) -> bool {
        self.occupations(idx).iter().all(|&n| n < self.n_max)
    }

    pub fn safe_indices(&self) -> Vec<usize> {
        (0..self.dim).filter(|&i| self.is_cutoff_safe(i)).collect()
    }

    /// States whose total occupation does not exceed `n_max`.
    pub fn low_number_indices(&self) -> Vec<usize> {
        (0..self.dim).filter(|&i| self.total_number(i) <= self.n_max).collect()
    }

    pub fn vacuum(&self) -> CVector<T> {
        self.basis_vector(0)
    }

    pub fn basis_vector(&self, idx: usize) -> CVector<T> {
        let mut v = CVector::zeros(self.dim);
        v[idx] = creal(T::one());
        v
    }

    pub fn annihilation(&self, k: usize, hbar: T) -> Result<CMatrix<T>> {
        self.modes.check_mode(k)?;
        let mut a = CMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            let n = self.occupation(j, k);
            if n > 0 {
                let amp = (hbar * lit::<T>(n as f64)).sqrt();
                a[(j - self.strides[k], j)] = creal(amp);
            }
        }
        Ok(a)
    }

    pub fn creation(&self, k: usize, hbar: T) -> Result<CMatrix<T>> {
        Ok(self.annihilation(k, hbar)?.adjoint())
    }

    /// Norm of the part of `psi` living on the truncation edge (some occupation equal to `n_max`).
    pub fn edge_weight(&self, psi: &CVector<T>) -> T {
        let mut s = T::zero();
        for i in 0..self.dim {
            if !self.is_cutoff_safe(i) {
                s += psi[i].norm_sqr();
            }
        }
        s.sqrt()
    }

    /// Applies a normally ordered word `a+(k_1)..a+(k_m) a(l_1)..a(l_n)` to basis state `j`.
    pub fn apply_word(&self, creators: &[usize], annihilators: &[usize], j: usize, hbar: T) -> Option<(usize, T)> {
        let mut occ = self.occupations(j);
        let mut amp = T::one();
        for &l in annihilators.iter().rev() {
            if occ[l] == 0 {
                return None;
            }
            amp *= (hbar * lit::<T>(occ[l] as f64)).sqrt();
            occ[l] -= 1;
        }
        for &k in creators.iter().rev() {
            if occ[k] == self.n_max {
                return None;
            }
            occ[k] += 1;
            amp *= (hbar * lit::<T>(occ[k] as f64)).sqrt();
        }
        Some((self.index(&occ), amp))
    }

    pub fn word_matrix(&self, creators: &[usize], annihilators: &[usize], hbar: T) -> Result<CMatrix<T>> {
        for &k in creators.iter().chain(annihilators) {
            self.modes.check_mode(k)?;
        }
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            if let Some((i, amp)) = self.apply_word(creators, annihilators, j, hbar) {
                m[(i, j)] += creal(amp);
            }
        }
        Ok(m)
    }

    /// Total lattice momentum of each basis state, reduced mod M.
    pub fn momentum_sectors(&self) -> Result<Vec<u32>> {
        let labels = self.modes.momentum().ok_or(Error::MissingLabels)?;
        Ok((0..self.dim)
            .map(|i| {
                let occ = self.occupations(i);
                let s: u64 = occ.iter().zip(&labels.labels).map(|(&n, &p)| n as u64 * p as u64).sum();
                (s % labels.modulus as u64) as u32
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term<T: Real> {
    pub creators: Vec<usize>,
    pub annihilators: Vec<usize>,
    pub coeff: Complex<T>,
    pub free: bool,
}

impl<T: Real> Term<T> {
    pub fn new(creators: Vec<usize>, annihilators: Vec<usize>, coeff: Complex<T>) -> Self {
        Self { creators, annihilators, coeff, free: false }
    }

    pub fn degree(&self) -> usize {
        self.creators.len() + self.annihilators.len()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            creators: self.annihilators.clone(),
            annihilators: self.creators.clone(),
            coeff: self.coeff.conj(),
            free: self.free,
        }
    }

    fn key(&self) -> (bool, Vec<usize>, Vec<usize>) {
        let mut c = self.creators.clone();
        let mut a = self.annihilators.clone();
        c.sort_unstable();
        a.sort_unstable();
        (self.free, c, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conservation {
    Strict,
    Off,
}

/// `H = H(0) + g V`; terms flagged `free` form `H(0)`, all others are scaled by `coupling`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalOrderedHamiltonian<T: Real> {
    pub terms: Vec<Term<T>>,
    pub coupling: T,
    /// Allows interaction terms with fewer than three ladder operators.
    pub relaxed: bool,
}

impl<T: Real> NormalOrderedHamiltonian<T> {
    pub fn new(coupling: T) -> Self {
        Self { terms: Vec::new(), coupling, relaxed: false }
    }

    /// Free part `sum_k eps(k) a+(k) a(k)` read off the mode set.
    pub fn free(modes: &ModeSet<T>) -> Self {
        let mut h = Self::new(T::zero());
        for (k, &e) in modes.energies().iter().enumerate() {
            h.terms.push(Term { creators: vec![k], annihilators: vec![k], coeff: creal(e), free: true });
        }
        h
    }

    pub fn with_free(modes: &ModeSet<T>, coupling: T) -> Self {
        let mut h = Self::free(modes);
        h.coupling = coupling;
        h
    }

    pub fn push(&mut self, creators: Vec<usize>, annihilators: Vec<usize>, coeff: Complex<T>) {
        self.terms.push(Term::new(creators, annihilators, coeff));
    }

    /// Adds the term and, unless it is self-adjoint, its adjoint.
    pub fn push_hermitian(&mut self, creators: Vec<usize>, annihilators: Vec<usize>, coeff: Complex<T>) {
        let t = Term::new(creators, annihilators, coeff);
        let adj = t.adjoint();
        let self_adjoint = adj.key() == t.key();
        if self_adjoint {
            let mut t = t;
            t.coeff = creal(t.coeff.re);
            self.terms.push(t);
        } else {
            self.terms.push(t);
            self.terms.push(adj);
        }
    }

    pub fn free_part(&self) -> Self {
        Self { terms: self.terms.iter().filter(|t| t.free).cloned().collect(), coupling: T::zero(), relaxed: self.relaxed }
    }

    /// Interaction part with the coupling folded into the coefficients (flag cleared, coupling 1).
    pub fn interaction_part(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|t| !t.free)
            .map(|t| Term { coeff: t.coeff * self.coupling, ..t.clone() })
            .collect();
        Self { terms, coupling: T::one(), relaxed: self.relaxed }
    }

    pub fn with_coupling(&self, g: T) -> Self {
        Self { coupling: g, ..self.clone() }
    }

    /// Every term with its effective coefficient (coupling applied to interaction terms).
    pub fn effective_terms(&self) -> Vec<Term<T>> {
        self.terms
            .iter()
            .map(|t| if t.free { t.clone() } else { Term { coeff: t.coeff * self.coupling, ..t.clone() } })
            .collect()
    }

    pub fn validate(&self, modes: &ModeSet<T>, conservation: Conservation) -> Result<()> {
        let tol = lit::<T>(1e-12);
        for (i, t) in self.terms.iter().enumerate() {
            for &k in t.creators.iter().chain(&t.annihilators) {
                modes.check_mode(k).map_err(|_| Error::Validation(format!("term {i} references mode {k}")))?;
            }
            if t.free && !(t.creators.len() == 1 && t.annihilators.len() == 1 && t.creators == t.annihilators) {
                return Err(Error::Validation(format!("free term {i} is not of the form eps a+(k) a(k)")));
            }
            if !t.free && !self.relaxed && t.degree() < 3 {
                return Err(Error::Validation(format!(
                    "interaction term {i} has {} ladder operators; relaxed mode is required",
                    t.degree()
                )));
            }
            if conservation == Conservation::Strict {
                if let Some(m) = modes.momentum() {
                    let sum = |v: &[usize]| v.iter().map(|&k| m.labels[k] as u64).sum::<u64>() % m.modulus as u64;
                    if sum(&t.creators) != sum(&t.annihilators) {
                        return Err(Error::Validation(format!("term {i} violates momentum conservation")));
                    }
                }
            }
        }
        let mut table: BTreeMap<(bool, Vec<usize>, Vec<usize>), Complex<T>> = BTreeMap::new();
        for t in &self.terms {
            *table.entry(t.key()).or_insert(creal(T::zero())) += t.coeff;
        }
        for ((free, c, a), v) in &table {
            let partner = table.get(&(*free, a.clone(), c.clone())).copied().unwrap_or(creal(T::zero()));
            if (*v - partner.conj()).norm_sqr().sqrt() > tol * (T::one() + v.norm_sqr().sqrt()) {
                return Err(Error::Validation(format!(
                    "coefficient of a+{c:?} a{a:?} lacks a conjugate partner (non-Hermitian)"
                )));
            }
        }
        Ok(())
    }
}

pub fn build_hamiltonian<T: Real>(space: &FockSpace<T>, h: &NormalOrderedHamiltonian<T>, hbar: T) -> Result<CMatrix<T>> {
    let d = space.dim();
    let mut m = CMatrix::zeros(d, d);
    for t in h.effective_terms() {
        for &k in t.creators.iter().chain(&t.annihilators) {
            space.modes().check_mode(k)?;
        }
        for j in 0..d {
            if let Some((i, amp)) = space.apply_word(&t.creators, &t.annihilators, j, hbar) {
                m[(i, j)] += t.coeff * amp;
            }
        }
    }
    let defect = hermiticity_defect(&m);
    if defect > lit::<T>(1e-12) * (T::one() + m.norm()) {
        return Err(Error::Validation(format!("assembled Hamiltonian is not Hermitian (defect {defect:?})")));
    }
    Ok(m)
}

pub fn hermiticity_defect<T: Real>(m: &CMatrix<T>) -> T {
    (m - m.adjoint()).norm()
}

/// `exp(m)` for nilpotent `m`; the series terminates exactly.
pub fn exp_nilpotent<T: Real>(m: &CMatrix<T>, max_order: usize) -> CMatrix<T> {
    let d = m.nrows();
    let mut out = CMatrix::identity(d, d);
    let mut term = CMatrix::identity(d, d);
    for j in 1..=max_order {
        term = &term * m / creal(lit::<T>(j as f64));
        if term.iter().all(|z| z.re == T::zero() && z.im == T::zero()) {
            break;
        }
        out += &term;
    }
    out
}

/// `W_alpha = exp(-alpha a+) exp(alpha* a)` on the truncated space.
pub fn weyl_operator<T: Real>(space: &FockSpace<T>, alpha: &[Complex<T>], hbar: T) -> Result<CMatrix<T>> {
    if alpha.len() != space.mode_count() {
        return Err(Error::Validation(format!("alpha has {} entries for {} modes", alpha.len(), space.mode_count())));
    }
    let d = space.dim();
    let mut x = CMatrix::zeros(d, d);
    let mut y = CMatrix::zeros(d, d);
    for (k, &al) in alpha.iter().enumerate() {
        let a = space.annihilation(k, hbar)?;
        x -= a.adjoint() * al;
        y += a * al.conj();
    }
    let order = space.mode_count() * space.n_max();
    Ok(exp_nilpotent(&x, order) * exp_nilpotent(&y, order))
}

/// Fit of the product law `W_a W_b = exp(-c (a*, b)) W_(a+b)` for one mode.
#[derive(Debug, Clone, Copy)]
pub struct WeylProductFit<T: Real> {
    /// Fitted coefficient `c` of `(a*, b)` in the exponent.
    pub exponent: Complex<T>,
    /// Residual of the law on the checked block after fitting.
    pub residual: T,
}

/// Determines the exponent of the Weyl product law by matrix multiplication on a padded
/// single-mode space and comparison on the block of occupations `<= n_check`.
pub fn weyl_product_fit<T: Real>(n_check: usize, pad: usize, alpha: Complex<T>, beta: Complex<T>, hbar: T) -> Result<WeylProductFit<T>> {
    let modes = ModeSet::new(vec![T::one()])?;
    let space = build_space(modes, n_check + pad)?;
    let wa = weyl_operator(&space, &[alpha], hbar)?;
    let wb = weyl_operator(&space, &[beta], hbar)?;
    let wab = weyl_operator(&space, &[alpha + beta], hbar)?;
    let lhs = (wa * wb).view((0, 0), (n_check + 1, n_check + 1)).into_owned();
    let rhs = wab.view((0, 0), (n_check + 1, n_check + 1)).into_owned();
    let lambda = rhs.dotc(&lhs) / rhs.dotc(&rhs);
    let residual = (&lhs - &rhs * lambda).norm();
    let exponent = -lambda.ln() / (alpha.conj() * beta);
    Ok(WeylProductFit { exponent, residual })
}

/// Residual of `a W_alpha - W_alpha a + c alpha W_alpha` on the block `<= n_check` of a padded mode.
pub fn weyl_commutator_residual<T: Real>(n_check: usize, pad: usize, alpha: Complex<T>, c: T, hbar: T) -> Result<T> {
    let modes = ModeSet::new(vec![T::one()])?;
    let space = build_space(modes, n_check + pad)?;
    let w = weyl_operator(&space, &[alpha], hbar)?;
    let a = space.annihilation(0, hbar)?;
    let r = &a * &w - &w * &a + &w * (alpha * c);
    Ok(r.view((0, 0), (n_check + 1, n_check + 1)).norm())
}

/// Strict stability `eps(k) + eps(l) > eps(j)` for every `j` carrying label `p(k) + p(l) mod M`.
pub fn check_stability<T: Real>(modes: &ModeSet<T>) -> Result<bool> {
    let m = modes.momentum().ok_or(Error::MissingLabels)?;
    let n = modes.mode_count();
    for k in 0..n {
        for l in k..n {
            let target = (m.labels[k] + m.labels[l]) % m.modulus;
            for j in 0..n {
                if m.labels[j] == target && !(modes.energy(k) + modes.energy(l) > modes.energy(j)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Diagonal `hbar * sum_k p(k) n_k` with unreduced integer labels.
pub fn momentum_operator<T: Real>(space: &FockSpace<T>, hbar: T) -> Result<CMatrix<T>> {
    let m = space.modes().momentum().ok_or(Error::MissingLabels)?;
    let d = space.dim();
    let mut p = CMatrix::zeros(d, d);
    for i in 0..d {
        let s: usize = space.occupations(i).iter().zip(&m.labels).map(|(&n, &l)| n * l as usize).sum();
        p[(i, i)] = creal(hbar * lit::<T>(s as f64));
    }
    Ok(p)
}

/// Lattice translation `exp(2 pi i P / (hbar M))`; conserved by every label-conserving term.
pub fn translation_operator<T: Real>(space: &FockSpace<T>, hbar: T) -> Result<CMatrix<T>> {
    let m = space.modes().momentum().ok_or(Error::MissingLabels)?;
    let p = momentum_operator(space, hbar)?;
    let scale = T::two_pi() / (hbar * lit::<T>(m.modulus as f64));
    Ok(CMatrix::from_diagonal(&p.diagonal().map(|z| {
        let ph = z.re * scale;
        Complex::new(ph.cos(), ph.sin())
    })))
}

/// Largest `||([a(k), a+(k')] - hbar delta) psi||` over cutoff-safe basis states.
pub fn ccr_residual<T: Real>(space: &FockSpace<T>, hbar: T) -> Result<T> {
    let n = space.mode_count();
    let ops: Vec<CMatrix<T>> = (0..n).map(|k| space.annihilation(k, hbar)).collect::<Result<_>>()?;
    let safe = space.safe_indices();
    let mut worst = T::zero();
    for k in 0..n {
        for l in 0..n {
            let ak = &ops[k];
            let al = &ops[l];
            let mut c = ak * al.adjoint() - al.adjoint() * ak;
            if k == l {
                for i in 0..space.dim() {
                    c[(i, i)] -= creal(hbar);
                }
            }
            let aa = ak * al - al * ak;
            for &j in &safe {
                worst = worst.max(c.column(j).norm()).max(aa.column(j).norm());
            }
        }
    }
    Ok(worst)
}
