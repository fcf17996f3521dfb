//! Time evolution with adiabatic switching, in Hilbert space and on L-functionals.
//!
//! All propagation uses the fourth-order commutator-free exponential scheme
//! `exp(h(b1 A1 + b2 A2)) exp(h(b2 A1 + b1 A2))` with Gauss nodes. Hilbert-space
//! exponentials are exact (Hermitian eigendecomposition); coefficient-space
//! exponentials are applied to vectors through a substepped Taylor series.

use nalgebra::ComplexField;
use num_complex::Complex;
use rayon::prelude::*;

use crate::fock::{build_hamiltonian, FockSpace, NormalOrderedHamiltonian};
use crate::lfun::{LGenerator, PolyLFunctional, Route};
use crate::sparse::LOperator;
use crate::{cplx, creal, lit, CMatrix, CVector, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `h(t) = exp(-t^2)`.
    Gaussian,
}

impl Profile {
    pub fn value<T: Real>(self, t: T) -> T {
        match self {
            Profile::Gaussian => (-t * t).exp(),
        }
    }

    /// Largest `t <= 0` with `h(t) = g`, for `g` in `(0, 1]`.
    pub fn inverse_left<T: Real>(self, g: T) -> Option<T> {
        if !(g > T::zero() && g <= T::one()) {
            return None;
        }
        match self {
            Profile::Gaussian => Some(-(-g.ln()).sqrt()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Gaussian => "gaussian",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(Profile::Gaussian),
            _ => None,
        }
    }
}

/// Switching `t -> h(a t)` on the window `[-T, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule<T: Real> {
    pub profile: Profile,
    pub rate: T,
    pub horizon: T,
    pub tail_tolerance: T,
}

impl<T: Real> Schedule<T> {
    /// Gaussian profile with `T = 4.3 / a` and tail tolerance `1e-8`.
    pub fn new(rate: T) -> Result<Self> {
        Self::with_horizon(Profile::Gaussian, rate, lit::<T>(4.3) / rate, lit(1e-8))
    }

    pub fn with_horizon(profile: Profile, rate: T, horizon: T, tail_tolerance: T) -> Result<Self> {
        if !(rate > T::zero()) || !(horizon > T::zero()) {
            return Err(Error::Validation("rate and horizon must be positive".into()));
        }
        let s = Self { profile, rate, horizon, tail_tolerance };
        let tail = s.tail();
        if !(tail < tail_tolerance) {
            return Err(Error::Horizon { tail: nalgebra::try_convert(tail).unwrap_or(f64::NAN) });
        }
        Ok(s)
    }

    /// Same profile and tolerance at another rate, with the horizon scaled as `1 / a`.
    pub fn with_rate(&self, rate: T) -> Result<Self> {
        Self::with_horizon(self.profile, rate, self.horizon * self.rate / rate, self.tail_tolerance)
    }

    pub fn value(&self, t: T) -> T {
        self.profile.value(self.rate * t)
    }

    /// `|h(aT)|`.
    pub fn tail(&self) -> T {
        self.profile.value(self.rate * self.horizon).abs()
    }

    /// Bound on the switching mass left outside `[-T, T]`, times `norm`.
    pub fn tail_bound(&self, norm: T) -> T {
        let (a, t) = (self.rate, self.horizon);
        lit::<T>(2.0) * norm * self.tail() / (lit::<T>(2.0) * a * a * t)
    }

    /// Time in `[-T, 0]` at which the switching reaches `g`.
    pub fn time_for_value(&self, g: T) -> Result<T> {
        if g < T::zero() || g > T::one() {
            return Err(Error::Validation(format!("switching value {g:?} outside [0, 1]")));
        }
        if g <= self.tail() {
            return Ok(-self.horizon);
        }
        let u = self.profile.inverse_left(g).ok_or_else(|| Error::Validation("profile cannot be inverted".into()))?;
        Ok((u / self.rate).max(-self.horizon))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig<T: Real> {
    pub space: FockSpace<T>,
    pub hamiltonian: NormalOrderedHamiltonian<T>,
    pub hbar: T,
    pub schedule: Schedule<T>,
    /// Relative tolerance for the Richardson estimate.
    pub rtol: T,
    /// Step bound `step_factor / ||H||`.
    pub step_factor: T,
    pub route: Route,
}

impl<T: Real> EvolutionConfig<T> {
    pub fn new(space: &FockSpace<T>, hamiltonian: &NormalOrderedHamiltonian<T>, hbar: T, schedule: Schedule<T>) -> Result<Self> {
        let c = Self {
            space: space.clone(),
            hamiltonian: hamiltonian.clone(),
            hbar,
            schedule,
            rtol: lit(1e-10),
            step_factor: lit(0.1),
            route: Route::Algebraic,
        };
        c.check()?;
        Ok(c)
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn with_step_factor(mut self, f: T) -> Self {
        self.step_factor = f;
        self
    }

    pub fn with_rtol(mut self, rtol: T) -> Result<Self> {
        self.rtol = rtol;
        self.check()?;
        Ok(self)
    }

    pub fn with_hbar(&self, hbar: T) -> Self {
        Self { hbar, ..self.clone() }
    }

    pub fn with_schedule(&self, schedule: Schedule<T>) -> Self {
        Self { schedule, ..self.clone() }
    }

    pub fn with_coupling(&self, g: T) -> Self {
        Self { hamiltonian: self.hamiltonian.with_coupling(g), ..self.clone() }
    }

    fn check(&self) -> Result<()> {
        if !(self.rtol > T::zero() && self.rtol <= lit(1e-4)) {
            return Err(Error::Validation("tolerance must lie in (0, 1e-4]".into()));
        }
        if self.hbar < T::zero() {
            return Err(Error::Validation("hbar must be non-negative".into()));
        }
        Ok(())
    }

    fn require_positive_hbar(&self) -> Result<()> {
        if self.hbar > T::zero() {
            Ok(())
        } else {
            Err(Error::Validation("Hilbert-space evolution needs hbar > 0".into()))
        }
    }
}

const B1: f64 = -0.038_675_134_594_812_866; // (3 - 2 sqrt 3) / 12
const B2: f64 = 0.538_675_134_594_812_9; // (3 + 2 sqrt 3) / 12
const C1: f64 = 0.211_324_865_405_187_1; // 1/2 - sqrt 3 / 6
const C2: f64 = 0.788_675_134_594_812_9; // 1/2 + sqrt 3 / 6

/// Switching weights of the two exponentials of a step from `t` with size `dt`,
/// in application order.
fn cf4_weights<T: Real>(s: &Schedule<T>, t: T, dt: T) -> [T; 2] {
    let h1 = s.value(t + lit::<T>(C1) * dt);
    let h2 = s.value(t + lit::<T>(C2) * dt);
    [lit::<T>(B2) * h1 + lit::<T>(B1) * h2, lit::<T>(B1) * h1 + lit::<T>(B2) * h2]
}

/// Hilbert-space matrices of a configuration.
#[derive(Debug, Clone)]
pub struct HilbertModel<T: Real> {
    pub h0: CMatrix<T>,
    pub v: CMatrix<T>,
    pub hbar: T,
}

impl<T: Real> HilbertModel<T> {
    /// `H(t) = h0 + h(a t) v` from explicit matrices.
    pub fn from_matrices(h0: CMatrix<T>, v: CMatrix<T>, hbar: T) -> Result<Self> {
        if !(hbar > T::zero()) {
            return Err(Error::Validation("Hilbert-space evolution needs hbar > 0".into()));
        }
        if h0.shape() != v.shape() || h0.nrows() != h0.ncols() {
            return Err(Error::Validation("model matrices must be square and of equal size".into()));
        }
        Ok(Self { h0, v, hbar })
    }

    pub fn new(cfg: &EvolutionConfig<T>) -> Result<Self> {
        cfg.require_positive_hbar()?;
        let h0 = build_hamiltonian(&cfg.space, &cfg.hamiltonian.free_part(), cfg.hbar)?;
        let v = build_hamiltonian(&cfg.space, &cfg.hamiltonian.interaction_part(), cfg.hbar)?;
        Ok(Self { h0, v, hbar: cfg.hbar })
    }

    pub fn full(&self, g: T) -> CMatrix<T> {
        &self.h0 + &self.v * creal(g)
    }

    /// `exp(-i dt (H0/2 + c V) / hbar)`.
    fn half_step(&self, dt: T, c: T) -> CMatrix<T> {
        let m = &self.h0 * creal(lit::<T>(0.5)) + &self.v * creal(c);
        hermitian_exp(&m, -dt / self.hbar)
    }

    /// `exp(-i H0 t / hbar)`.
    pub fn free_propagator(&self, t: T) -> CMatrix<T> {
        hermitian_exp(&self.h0, -t / self.hbar)
    }
}

/// `exp(i s M)` for Hermitian `M`.
pub fn hermitian_exp<T: Real>(m: &CMatrix<T>, s: T) -> CMatrix<T> {
    let herm = (m + m.adjoint()) * creal(lit::<T>(0.5));
    let eig = herm.symmetric_eigen();
    let phases = eig.eigenvalues.map(|e| Complex::new(T::zero(), s * e).exp());
    let mut scaled = eig.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * eig.eigenvectors.adjoint()
}

fn spectral_norm<T: Real>(m: &CMatrix<T>) -> T {
    let herm = (m + m.adjoint()) * creal(lit::<T>(0.5));
    herm.symmetric_eigenvalues().iter().fold(T::zero(), |a, e| a.max(e.abs()))
}

/// Uniform step plan over `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan<T: Real> {
    pub t0: T,
    pub t1: T,
    pub steps: usize,
}

impl<T: Real> StepPlan<T> {
    pub fn dt(&self) -> T {
        if self.steps == 0 {
            T::zero()
        } else {
            (self.t1 - self.t0) / lit::<T>(self.steps as f64)
        }
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self { steps: self.steps * factor, ..*self }
    }
}

/// Rate bound `||H(t)|| / hbar` (Hilbert norms when `hbar > 0`, coefficient-space norms otherwise).
pub fn rate_bound<T: Real>(cfg: &EvolutionConfig<T>) -> Result<T> {
    if cfg.hbar > T::zero() {
        let m = HilbertModel::new(cfg)?;
        Ok((spectral_norm(&m.h0) + spectral_norm(&m.v)) / cfg.hbar)
    } else {
        let g = LGenerator::build(&cfg.space, &cfg.hamiltonian, cfg.hbar, cfg.route)?;
        let w = g.free_frequency().iter().fold(T::zero(), |a, x| a.max(x.abs()));
        Ok(w / lit(2.0) + g.interaction().one_norm())
    }
}

pub fn step_plan<T: Real>(cfg: &EvolutionConfig<T>, t0: T, t1: T) -> Result<StepPlan<T>> {
    if t1 < t0 {
        return Err(Error::Validation("evolution needs t0 <= t1".into()));
    }
    plan_for_rate(cfg, rate_bound(cfg)?, t0, t1)
}

/// Step plan for a Hilbert model that need not come from the configured Hamiltonian.
pub fn model_step_plan<T: Real>(cfg: &EvolutionConfig<T>, model: &HilbertModel<T>, t0: T, t1: T) -> Result<StepPlan<T>> {
    if t1 < t0 {
        return Err(Error::Validation("evolution needs t0 <= t1".into()));
    }
    plan_for_rate(cfg, (spectral_norm(&model.h0) + spectral_norm(&model.v)) / model.hbar, t0, t1)
}

fn plan_for_rate<T: Real>(cfg: &EvolutionConfig<T>, rate: T, t0: T, t1: T) -> Result<StepPlan<T>> {
    if t1 == t0 {
        return Ok(StepPlan { t0, t1, steps: 0 });
    }
    let rate = rate.max(cfg.schedule.rate).max(lit(1e-3));
    let steps: f64 = nalgebra::try_convert(((t1 - t0) * rate / cfg.step_factor).ceil()).unwrap_or(f64::INFINITY);
    if !steps.is_finite() || steps > 5e7 {
        return Err(Error::Integration(format!("step count {steps} is not usable")));
    }
    Ok(StepPlan { t0, t1, steps: (steps as usize).max(1) })
}

/// Full propagator `U(t1, t0)` on the Hilbert space.
pub fn propagator_with_plan<T: Real>(cfg: &EvolutionConfig<T>, model: &HilbertModel<T>, plan: StepPlan<T>) -> CMatrix<T> {
    let d = model.h0.nrows();
    let mut u = CMatrix::identity(d, d);
    let dt = plan.dt();
    for j in 0..plan.steps {
        let t = plan.t0 + dt * lit::<T>(j as f64);
        let [w1, w2] = cf4_weights(&cfg.schedule, t, dt);
        u = model.half_step(dt, w1) * u;
        u = model.half_step(dt, w2) * u;
    }
    u
}

pub fn propagator<T: Real>(cfg: &EvolutionConfig<T>, t0: T, t1: T) -> Result<CMatrix<T>> {
    let model = HilbertModel::new(cfg)?;
    let plan = step_plan(cfg, t0, t1)?;
    Ok(propagator_with_plan(cfg, &model, plan))
}

/// Interaction-picture propagators `S(t, plan.t0)` after every `every` steps (and at the end).
pub fn interaction_checkpoints<T: Real>(
    cfg: &EvolutionConfig<T>,
    model: &HilbertModel<T>,
    plan: StepPlan<T>,
    every: usize,
) -> Vec<(T, CMatrix<T>)> {
    let d = model.h0.nrows();
    let eig = model.h0.clone().symmetric_eigen();
    let frame = |t: T| {
        let ph = eig.eigenvalues.map(|x| Complex::new(T::zero(), t * x / model.hbar).exp());
        let mut m = eig.eigenvectors.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= ph[j];
        }
        m * eig.eigenvectors.adjoint()
    };
    let start = frame(-plan.t0);
    let mut u = CMatrix::identity(d, d);
    let mut out = Vec::new();
    let dt = plan.dt();
    let every = every.max(1);
    for j in 0..plan.steps {
        let t = plan.t0 + dt * lit::<T>(j as f64);
        let [w1, w2] = cf4_weights(&cfg.schedule, t, dt);
        u = model.half_step(dt, w1) * u;
        u = model.half_step(dt, w2) * u;
        if (j + 1) % every == 0 || j + 1 == plan.steps {
            let t1 = t + dt;
            out.push((t1, frame(t1) * &u * &start));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum State<T: Real> {
    Vector(CVector<T>),
    Kernel(CMatrix<T>),
}

impl<T: Real> State<T> {
    pub fn dim(&self) -> usize {
        match self {
            State::Vector(v) => v.len(),
            State::Kernel(k) => k.nrows(),
        }
    }
}

/// Schroedinger (vector) or von Neumann (kernel) propagation from `t0` to `t1`.
pub fn evolve_state<T: Real>(cfg: &EvolutionConfig<T>, state: &State<T>, t0: T, t1: T) -> Result<State<T>> {
    if state.dim() != cfg.space.dim() {
        return Err(Error::Validation("state does not live on the configured space".into()));
    }
    let u = propagator(cfg, t0, t1)?;
    Ok(match state {
        State::Vector(v) => State::Vector(&u * v),
        State::Kernel(k) => State::Kernel(&u * k * u.adjoint()),
    })
}

/// `S(t1, t0) = e^{i H0 t1 / hbar} U(t1, t0) e^{-i H0 t0 / hbar}`.
pub fn interaction_s<T: Real>(cfg: &EvolutionConfig<T>, t0: T, t1: T) -> Result<CMatrix<T>> {
    let model = HilbertModel::new(cfg)?;
    let plan = step_plan(cfg, t0, t1)?;
    Ok(to_interaction(&model, &propagator_with_plan(cfg, &model, plan), t0, t1))
}

fn to_interaction<T: Real>(model: &HilbertModel<T>, u: &CMatrix<T>, t0: T, t1: T) -> CMatrix<T> {
    model.free_propagator(-t1) * u * model.free_propagator(t0)
}

#[derive(Debug, Clone)]
pub struct AdiabaticSHat<T: Real> {
    pub matrix: CMatrix<T>,
    pub steps: usize,
    /// `|h(aT)| ||V|| x (residual time mass)`.
    pub tail_bound: T,
    /// Richardson estimate from the step-halved run, `||S_n - S_2n|| / 15`.
    pub richardson: T,
}

/// `S_a(T, -T)` with a Richardson step-halving estimate.
pub fn adiabatic_s_hat<T: Real>(cfg: &EvolutionConfig<T>) -> Result<AdiabaticSHat<T>> {
    let model = HilbertModel::new(cfg)?;
    let tt = cfg.schedule.horizon;
    let plan = step_plan(cfg, -tt, tt)?;
    let coarse = to_interaction(&model, &propagator_with_plan(cfg, &model, plan), -tt, tt);
    let fine = to_interaction(&model, &propagator_with_plan(cfg, &model, plan.refined(2)), -tt, tt);
    let richardson = (&coarse - &fine).norm() / lit(15.0);
    Ok(AdiabaticSHat {
        matrix: fine,
        steps: plan.steps * 2,
        tail_bound: cfg.schedule.tail_bound(spectral_norm(&model.v)),
        richardson,
    })
}

/// Error ratio of the scheme under step halving on `[t0, t1]`, against a reference at 8x steps.
pub fn order_ratio<T: Real>(cfg: &EvolutionConfig<T>, t0: T, t1: T, steps: usize) -> Result<T> {
    let model = HilbertModel::new(cfg)?;
    let plan = StepPlan { t0, t1, steps };
    let reference = propagator_with_plan(cfg, &model, plan.refined(8));
    let e1 = (propagator_with_plan(cfg, &model, plan) - &reference).norm();
    let e2 = (propagator_with_plan(cfg, &model, plan.refined(2)) - &reference).norm();
    Ok(e1 / e2)
}

/// Coefficient-space model: generator plus the norm used for Taylor substeps.
#[derive(Debug, Clone)]
pub struct LModel<T: Real> {
    pub generator: LGenerator<T>,
    interaction_norm: T,
    free_norm: T,
}

impl<T: Real> LModel<T> {
    pub fn new(cfg: &EvolutionConfig<T>) -> Result<Self> {
        let generator = LGenerator::build(&cfg.space, &cfg.hamiltonian, cfg.hbar, cfg.route)?;
        // Powers decay much faster than the one-norm suggests in the monomial basis.
        let g1 = generator.interaction();
        let g2 = g1.compose(g1);
        let g4 = g2.compose(&g2);
        let interaction_norm = g1.one_norm().min(g2.one_norm().sqrt()).min(g4.one_norm().sqrt().sqrt());
        let free_norm = generator.free_frequency().iter().fold(T::zero(), |a, x| a.max(x.abs()));
        Ok(Self { generator, interaction_norm, free_norm })
    }

    /// `v <- exp(dt (G0/2 + c G_V)) v`.
    fn half_step(&self, v: &mut [Complex<T>], dt: T, c: T, scratch: &mut (Vec<Complex<T>>, Vec<Complex<T>>)) {
        let norm = dt.abs() * (self.free_norm / lit(2.0) + c.abs() * self.interaction_norm);
        let sub: f64 = nalgebra::try_convert(norm.ceil()).unwrap_or(1.0);
        let sub = (sub as usize).max(1);
        let h = dt / lit::<T>(sub as f64);
        let freq = self.generator.free_frequency();
        let gv = self.generator.interaction();
        let tiny = lit::<T>(2e-16);
        let (term, next) = scratch;
        for _ in 0..sub {
            term.copy_from_slice(v);
            let scale = v.iter().fold(T::zero(), |a, z| a.max(z.modulus()));
            for j in 1..60 {
                gv.apply_into(term, next, creal(c), false);
                let f = h / lit::<T>(j as f64);
                let mut mx = T::zero();
                for p in 0..v.len() {
                    next[p] = (next[p] + cplx(T::zero(), freq[p] * lit(0.5)) * term[p]) * creal(f);
                    v[p] += next[p];
                    mx = mx.max(next[p].modulus());
                }
                std::mem::swap(term, next);
                if mx <= tiny * scale {
                    break;
                }
            }
        }
    }

    /// `v <- exp(tau (G0 + h G_V)) v` for either sign of `tau`.
    pub fn exp_apply(&self, v: &mut CVector<T>, tau: T, h: T) {
        let n = v.len();
        let mut scratch = (vec![creal(T::zero()); n], vec![creal(T::zero()); n]);
        self.half_step(v.as_mut_slice(), tau * lit(2.0), h / lit(2.0), &mut scratch);
    }

    /// `exp(G0 t)` on each column (diagonal phases).
    pub fn free_phase(&self, x: &mut CMatrix<T>, t: T) {
        for (p, &w) in self.generator.free_frequency().iter().enumerate() {
            let ph = Complex::new(T::zero(), w * t).exp();
            for col in 0..x.ncols() {
                x[(p, col)] *= ph;
            }
        }
    }
}

/// Propagates the columns of `x` from `plan.t0` to `plan.t1` in coefficient space.
pub fn evolve_l_columns<T: Real>(cfg: &EvolutionConfig<T>, model: &LModel<T>, x: &CMatrix<T>, plan: StepPlan<T>) -> CMatrix<T> {
    let dt = plan.dt();
    let n = x.nrows();
    let cols: Vec<Vec<Complex<T>>> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let mut v: Vec<Complex<T>> = x.column(j).iter().copied().collect();
            let mut scratch = (vec![creal(T::zero()); n], vec![creal(T::zero()); n]);
            for s in 0..plan.steps {
                let t = plan.t0 + dt * lit::<T>(s as f64);
                let [w1, w2] = cf4_weights(&cfg.schedule, t, dt);
                model.half_step(&mut v, dt, w1, &mut scratch);
                model.half_step(&mut v, dt, w2, &mut scratch);
            }
            v
        })
        .collect();
    CMatrix::from_fn(n, x.ncols(), |i, j| cols[j][i])
}

pub fn evolve_l<T: Real>(cfg: &EvolutionConfig<T>, l: &PolyLFunctional<T>, t0: T, t1: T) -> Result<PolyLFunctional<T>> {
    if l.space().dim() != cfg.space.dim() {
        return Err(Error::Validation("functional does not live on the configured space".into()));
    }
    let model = LModel::new(cfg)?;
    let plan = step_plan(cfg, t0, t1)?;
    let x = CMatrix::from_column_slice(l.space().dim().pow(2), 1, l.to_vector().as_slice());
    let y = evolve_l_columns(cfg, &model, &x, plan);
    Ok(PolyLFunctional::from_vector(&cfg.space, cfg.hbar, &y.column(0).clone_owned()))
}

/// Interaction-picture coefficient-space propagator `S(t1, t0) = e^{-G0 t1} U(t1, t0) e^{G0 t0}` on columns.
pub fn interaction_s_l_apply<T: Real>(cfg: &EvolutionConfig<T>, x: &CMatrix<T>, t0: T, t1: T) -> Result<CMatrix<T>> {
    let model = LModel::new(cfg)?;
    interaction_s_l_apply_with(cfg, &model, x, t0, t1)
}

pub fn interaction_s_l_apply_with<T: Real>(cfg: &EvolutionConfig<T>, model: &LModel<T>, x: &CMatrix<T>, t0: T, t1: T) -> Result<CMatrix<T>> {
    let plan = step_plan(cfg, t0, t1)?;
    let mut y = x.clone();
    model.free_phase(&mut y, t0);
    let mut y = evolve_l_columns(cfg, model, &y, plan);
    model.free_phase(&mut y, -t1);
    Ok(y)
}

/// `S_a(T, -T)` applied to the columns of `x`.
pub fn adiabatic_s_l_apply<T: Real>(cfg: &EvolutionConfig<T>, x: &CMatrix<T>) -> Result<CMatrix<T>> {
    let tt = cfg.schedule.horizon;
    interaction_s_l_apply(cfg, x, -tt, tt)
}

/// `S_a(T, -T)` as an operator on coefficient space (propagates the full identity).
pub fn adiabatic_s_l<T: Real>(cfg: &EvolutionConfig<T>) -> Result<LOperator<T>> {
    let n = cfg.space.dim().pow(2);
    let y = adiabatic_s_l_apply(cfg, &CMatrix::identity(n, n))?;
    Ok(LOperator::from_dense(&y))
}

/// Dyson terms `S_0..S_order` of the interaction-picture propagator in powers of the coupling,
/// integrated as a triangular linear system with classical RK4.
pub fn dyson_terms<T: Real>(cfg: &EvolutionConfig<T>, order: usize, steps: usize) -> Result<Vec<CMatrix<T>>> {
    let cfg1 = cfg.with_coupling(T::one());
    let model = HilbertModel::new(&cfg1)?;
    let tt = cfg.schedule.horizon;
    let d = cfg.space.dim();
    let eig = model.h0.clone().symmetric_eigen();
    let vi = |t: T| -> CMatrix<T> {
        let e = |s: T| {
            let ph = eig.eigenvalues.map(|x| Complex::new(T::zero(), s * x / model.hbar).exp());
            let mut m = eig.eigenvectors.clone();
            for (j, mut col) in m.column_iter_mut().enumerate() {
                col *= ph[j];
            }
            m * eig.eigenvectors.adjoint()
        };
        e(t) * &model.v * e(-t) * cplx(T::zero(), -cfg.schedule.value(t) / model.hbar)
    };
    let rhs = |t: T, s: &[CMatrix<T>]| -> Vec<CMatrix<T>> {
        let a = vi(t);
        let mut out = vec![CMatrix::zeros(d, d)];
        for k in 1..=order {
            out.push(&a * &s[k - 1]);
        }
        out
    };
    let mut s: Vec<CMatrix<T>> = (0..=order).map(|k| if k == 0 { CMatrix::identity(d, d) } else { CMatrix::zeros(d, d) }).collect();
    let dt = lit::<T>(2.0) * tt / lit::<T>(steps as f64);
    let half = dt / lit(2.0);
    let axpy = |s: &[CMatrix<T>], k: &[CMatrix<T>], f: T| -> Vec<CMatrix<T>> { s.iter().zip(k).map(|(a, b)| a + b * creal(f)).collect() };
    for j in 0..steps {
        let t = -tt + dt * lit::<T>(j as f64);
        let k1 = rhs(t, &s);
        let k2 = rhs(t + half, &axpy(&s, &k1, half));
        let k3 = rhs(t + half, &axpy(&s, &k2, half));
        let k4 = rhs(t + dt, &axpy(&s, &k3, dt));
        for k in 0..=order {
            s[k] += (&k1[k] + &k2[k] * creal(lit::<T>(2.0)) + &k3[k] * creal(lit::<T>(2.0)) + &k4[k]) * creal(dt / lit(6.0));
        }
    }
    Ok(s)
}

/// Sum of Dyson terms at the configured coupling.
pub fn dyson_s_hat<T: Real>(cfg: &EvolutionConfig<T>, order: usize, steps: usize) -> Result<CMatrix<T>> {
    let terms = dyson_terms(cfg, order, steps)?;
    let g = cfg.hamiltonian.coupling;
    let mut out = CMatrix::zeros(cfg.space.dim(), cfg.space.dim());
    let mut gk = T::one();
    for t in terms {
        out += t * creal(gk);
        gk *= g;
    }
    Ok(out)
}
