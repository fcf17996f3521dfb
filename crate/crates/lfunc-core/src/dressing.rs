//! Eigenstate tracking, adiabatic dressing in both formalisms, and the adiabatic optimizer.

use nalgebra::ComplexField;

use crate::evolve::{evolve_l, hermitian_exp, model_step_plan, propagator_with_plan, EvolutionConfig, HilbertModel};
use crate::fock::{build_hamiltonian, FockSpace, NormalOrderedHamiltonian};
use crate::lfun::{density_from_l, min_eigenvalue, LGenerator, PolyLFunctional};
use crate::{Complex64, Error, Matrix64, Result, Vector64};

/// Linear family `H(g) = h0 + g v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub h0: Matrix64,
    pub v: Matrix64,
}

impl Family {
    pub fn new(h0: Matrix64, v: Matrix64) -> Result<Self> {
        if h0.shape() != v.shape() || h0.nrows() != h0.ncols() {
            return Err(Error::Validation("family matrices must be square and of equal size".into()));
        }
        Ok(Self { h0, v })
    }

    /// `H(0)` from the free terms, `v` from the interaction at the configured coupling.
    pub fn from_hamiltonian(space: &FockSpace<f64>, h: &NormalOrderedHamiltonian<f64>, hbar: f64) -> Result<Self> {
        let h0 = build_hamiltonian(space, &h.free_part(), hbar)?;
        let v = build_hamiltonian(space, &h.interaction_part(), hbar)?;
        Self::new(h0, v)
    }

    /// `(1 - s) start + s end`.
    pub fn interpolating(start: Matrix64, end: Matrix64) -> Result<Self> {
        let v = &end - &start;
        Self::new(start, v)
    }

    pub fn at(&self, g: f64) -> Matrix64 {
        &self.h0 + &self.v * Complex64::new(g, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn model(&self, hbar: f64) -> Result<HilbertModel<f64>> {
        HilbertModel::from_matrices(self.h0.clone(), self.v.clone(), hbar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    All,
    /// Fixed total occupation.
    Number(usize),
    /// Fixed total momentum label modulo the modulus.
    Momentum(u32),
}

pub fn sector_indices(space: &FockSpace<f64>, sector: Sector) -> Result<Vec<usize>> {
    Ok(match sector {
        Sector::All => (0..space.dim()).collect(),
        Sector::Number(n) => (0..space.dim()).filter(|&i| space.total_number(i) == n).collect(),
        Sector::Momentum(q) => {
            let labels = space.momentum_sectors()?;
            (0..space.dim()).filter(|&i| labels[i] == q).collect()
        }
    })
}

/// Sector of the basis state `idx` for the conserved charge of this space
/// (momentum when labels exist, otherwise particle number).
pub fn natural_sector(space: &FockSpace<f64>, idx: usize) -> Result<Sector> {
    if space.modes().momentum().is_some() {
        Ok(Sector::Momentum(space.momentum_sectors()?[idx]))
    } else {
        Ok(Sector::Number(space.total_number(idx)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    /// Lowest eigenvalue of the sector at the first grid point.
    Lowest,
    /// The eigenvector with maximal overlap with this vector.
    Vector(Vector64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTrack {
    pub g: Vec<f64>,
    pub energy: Vec<f64>,
    pub vectors: Vec<Vector64>,
    pub gap: Vec<f64>,
}

impl SpectralTrack {
    pub fn min_gap(&self) -> f64 {
        self.gap.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn last(&self) -> (&f64, &Vector64) {
        (self.energy.last().expect("non-empty track"), self.vectors.last().expect("non-empty track"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    pub gap_min: f64,
    pub min_overlap: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { gap_min: 1e-6, min_overlap: 0.5 }
    }
}

/// Follows one eigenvector along an arbitrary sequence of couplings by maximal overlap.
pub fn track_path(family: &Family, indices: &[usize], start: &Start, path: &[f64], opts: TrackOptions) -> Result<SpectralTrack> {
    if path.is_empty() || indices.is_empty() {
        return Err(Error::Validation("tracking needs a non-empty path and sector".into()));
    }
    let d = family.dim();
    let s = indices.len();
    let mut track = SpectralTrack { g: Vec::new(), energy: Vec::new(), vectors: Vec::new(), gap: Vec::new() };
    let mut prev: Option<Vector64> = match start {
        Start::Lowest => None,
        Start::Vector(v) => Some(v.clone()),
    };
    for (step, &g) in path.iter().enumerate() {
        let h = family.at(g);
        let sub = Matrix64::from_fn(s, s, |i, j| h[(indices[i], indices[j])]);
        let eig = ((&sub + sub.adjoint()) * Complex64::new(0.5, 0.0)).symmetric_eigen();
        let embed = |j: usize| {
            let mut v = Vector64::zeros(d);
            for (a, &i) in indices.iter().enumerate() {
                v[i] = eig.eigenvectors[(a, j)];
            }
            v
        };
        let (sel, overlap) = match &prev {
            None => {
                let j = (0..s).min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap_or(0);
                (j, None)
            }
            Some(p) => {
                let mut best = (0, Complex64::new(0.0, 0.0));
                for j in 0..s {
                    let o = embed(j).dotc(p);
                    if o.modulus() > best.1.modulus() {
                        best = (j, o);
                    }
                }
                (best.0, Some(best.1))
            }
        };
        if let Some(o) = overlap {
            let threshold = if step == 0 { 0.5f64.max(opts.min_overlap) } else { opts.min_overlap };
            if o.modulus() < threshold {
                return Err(Error::Tracking { g, overlap: o.modulus() });
            }
        }
        let e = eig.eigenvalues[sel];
        let gap = (0..s).filter(|&j| j != sel).map(|j| (eig.eigenvalues[j] - e).abs()).fold(f64::INFINITY, f64::min);
        if gap < opts.gap_min {
            return Err(Error::Degeneracy { g, gap, gap_min: opts.gap_min });
        }
        let mut v = embed(sel);
        // Fix the phase: real positive overlap with the previous vector (or the largest entry).
        let reference = match overlap {
            Some(o) => o.conj(),
            None => {
                let k = (0..d).max_by(|&a, &b| v[a].modulus().total_cmp(&v[b].modulus())).unwrap_or(0);
                v[k]
            }
        };
        if reference.modulus() > 0.0 {
            v *= reference.conj() / reference.modulus();
        }
        track.g.push(g);
        track.energy.push(e);
        track.gap.push(gap);
        prev = Some(v.clone());
        track.vectors.push(v);
    }
    Ok(track)
}

/// Tracks an eigenvector over an increasing grid in `[0, 1]`.
pub fn eigen_track(family: &Family, indices: &[usize], start: &Start, g_grid: &[f64], opts: TrackOptions) -> Result<SpectralTrack> {
    if g_grid.windows(2).any(|w| w[1] <= w[0]) || g_grid.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
        return Err(Error::Validation("g-grid must be increasing inside [0, 1]".into()));
    }
    track_path(family, indices, start, g_grid, opts)
}

pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// `int_{t0}^{t1} (E(h(a tau)) - E(0)) dtau` by composite Simpson along a tracked path.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseIntegral {
    pub value: f64,
    pub energy_at_zero: f64,
    pub min_gap: f64,
}

pub fn phase_integral(
    family: &Family,
    indices: &[usize],
    start: &Start,
    cfg: &EvolutionConfig<f64>,
    t0: f64,
    t1: f64,
    intervals: usize,
) -> Result<PhaseIntegral> {
    let n = intervals.max(2) + intervals % 2;
    let dt = (t1 - t0) / n as f64;
    let path: Vec<f64> = std::iter::once(0.0).chain((0..=n).map(|i| cfg.schedule.value(t0 + dt * i as f64))).collect();
    let track = track_path(family, indices, start, &path, TrackOptions::default())?;
    let e0 = track.energy[0];
    let mut sum = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * (track.energy[i + 1] - e0);
    }
    Ok(PhaseIntegral { value: sum * dt / 3.0, energy_at_zero: e0, min_gap: track.min_gap() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DressingReport {
    pub rate: f64,
    pub fidelity: f64,
    /// `|arg <phi(1), dressed>|` after the dynamical phase correction.
    pub phase_mismatch: f64,
    /// `int_{-T}^0 (E(h(a tau)) - E(0)) dtau`.
    pub phase_integral: f64,
    pub min_gap: f64,
    pub tail_bound: f64,
    pub steps: usize,
    pub state: Vector64,
}

const PHASE_INTERVALS: usize = 2000;
const GRID_POINTS: usize = 200;

/// Dressed state at the switching time `t` in `[-T, 0]` with the dynamical phase removed, plus
/// the tracked eigenvector at `h(a t)`.
fn dressed_at(family: &Family, indices: &[usize], start: &Start, cfg: &EvolutionConfig<f64>, t: f64) -> Result<(Vector64, Vector64, f64, f64, usize)> {
    let hbar = cfg.hbar;
    let tt = cfg.schedule.horizon;
    let g_target = cfg.schedule.value(t);
    let mut grid = uniform_grid(GRID_POINTS).into_iter().map(|x| x * g_target).collect::<Vec<_>>();
    grid.dedup();
    let track = track_path(family, indices, start, &grid, TrackOptions::default())?;
    let phi0 = track.vectors[0].clone();
    let target = track.vectors.last().cloned().unwrap_or_else(|| phi0.clone());
    let beta = phase_integral(family, indices, &Start::Vector(phi0.clone()), cfg, -tt, t, PHASE_INTERVALS)?;
    let model = family.model(hbar)?;
    let plan = model_step_plan(cfg, &model, -tt, t)?;
    let u = propagator_with_plan(cfg, &model, plan);
    // e^{-i H(0) t / hbar} S(t, -T) phi0 = U(t, -T) e^{i H(0) T / hbar} phi0.
    let psi = &u * (hermitian_exp(&model.h0, tt / hbar) * &phi0);
    let correction = Complex64::new(0.0, (beta.value + beta.energy_at_zero * t) / hbar).exp();
    Ok((psi * correction, target, beta.value, track.min_gap().min(beta.min_gap), plan.steps))
}

/// Adiabatic dressing of the tracked eigenvector from `g = 0` to `g = 1`.
pub fn dress_state(family: &Family, indices: &[usize], start: &Start, cfg: &EvolutionConfig<f64>) -> Result<DressingReport> {
    let (psi, target, beta, min_gap, steps) = dressed_at(family, indices, start, cfg, 0.0)?;
    let o = target.dotc(&psi);
    Ok(DressingReport {
        rate: cfg.schedule.rate,
        fidelity: o.modulus().min(1.0),
        phase_mismatch: o.argument().abs(),
        phase_integral: beta,
        min_gap,
        tail_bound: cfg.schedule.tail_bound(spectral(&family.v)),
        steps,
        state: psi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateReport {
    pub time: f64,
    pub g: f64,
    pub fidelity: f64,
    pub phase_mismatch: f64,
    pub state: Vector64,
}

/// Dressed state at the time where the switching reaches `g_target`.
pub fn dress_intermediate(family: &Family, indices: &[usize], start: &Start, cfg: &EvolutionConfig<f64>, g_target: f64) -> Result<IntermediateReport> {
    let t = cfg.schedule.time_for_value(g_target)?;
    let (psi, target, _, _, _) = dressed_at(family, indices, start, cfg, t)?;
    let o = target.dotc(&psi);
    Ok(IntermediateReport { time: t, g: cfg.schedule.value(t), fidelity: o.modulus().min(1.0), phase_mismatch: o.argument().abs(), state: psi })
}

fn spectral(m: &Matrix64) -> f64 {
    ((m + m.adjoint()) * Complex64::new(0.5, 0.0)).symmetric_eigenvalues().iter().fold(0.0f64, |a, e| a.max(e.abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LDressingReport {
    pub rate: f64,
    /// `||G(1) L|| / ||L||` on the dressed functional.
    pub stationarity_residual: f64,
    /// Same quantity for the input under `G(0)`.
    pub input_residual: f64,
    /// Smallest kernel eigenvalue of the output (only for `hbar > 0`).
    pub min_eigenvalue: Option<f64>,
    pub tail_bound: f64,
    pub output: PolyLFunctional<f64>,
}

/// `U_a(0, -T) omega0` for a functional stationary under `H(0)`.
pub fn dress_l(omega0: &PolyLFunctional<f64>, cfg: &EvolutionConfig<f64>) -> Result<LDressingReport> {
    let gen = LGenerator::build(&cfg.space, &cfg.hamiltonian, cfg.hbar, cfg.route)?;
    let x = omega0.to_vector();
    let scale = x.norm().max(f64::MIN_POSITIVE);
    let input_residual = gen.apply(0.0, &x).norm() / scale;
    if input_residual > 1e-9 {
        return Err(Error::Validation(format!("input functional is not stationary under H(0) (residual {input_residual:e})")));
    }
    let tt = cfg.schedule.horizon;
    let output = evolve_l(cfg, omega0, -tt, 0.0)?;
    let y = output.to_vector();
    let stationarity_residual = gen.apply(1.0, &y).norm() / y.norm().max(f64::MIN_POSITIVE);
    let min_eigenvalue = if cfg.hbar > 0.0 { Some(min_eigenvalue(&density_from_l(&output)?.kernel)) } else { None };
    Ok(LDressingReport {
        rate: cfg.schedule.rate,
        stationarity_residual,
        input_residual,
        min_eigenvalue,
        tail_bound: cfg.schedule.tail_bound(gen.interaction().one_norm()),
        output,
    })
}

/// Transverse driver `-sum_k (a(k) + a+(k))`.
pub fn aqc_driver(space: &FockSpace<f64>, hbar: f64) -> Result<Matrix64> {
    let mut m = Matrix64::zeros(space.dim(), space.dim());
    for k in 0..space.mode_count() {
        let a = space.annihilation(k, hbar)?;
        m -= &a + a.adjoint();
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AqcReport {
    pub rate: f64,
    pub success: f64,
    pub min_gap: f64,
    /// Basis indices spanning the problem's ground space when the problem is diagonal.
    pub minimizers: Vec<usize>,
    pub state: Vector64,
}

/// Adiabatic run along `(1 - s) driver + s problem`; success is the weight in the problem's ground space.
pub fn aqc_solve(problem: &Matrix64, driver: &Matrix64, cfg: &EvolutionConfig<f64>) -> Result<AqcReport> {
    let family = Family::interpolating(driver.clone(), problem.clone())?;
    let all: Vec<usize> = (0..family.dim()).collect();
    let track = eigen_track(&family, &all, &Start::Lowest, &uniform_grid(GRID_POINTS), TrackOptions::default())?;
    let tt = cfg.schedule.horizon;
    let model = family.model(cfg.hbar)?;
    let plan = model_step_plan(cfg, &model, -tt, 0.0)?;
    let psi = propagator_with_plan(cfg, &model, plan) * &track.vectors[0];
    let eig = ((problem + problem.adjoint()) * Complex64::new(0.5, 0.0)).symmetric_eigen();
    let emin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut success = 0.0;
    for j in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[j] - emin < 1e-9 {
            success += eig.eigenvectors.column(j).dotc(&psi).norm_sqr();
        }
    }
    let diagonal = (0..problem.nrows()).all(|i| (0..problem.ncols()).all(|j| i == j || problem[(i, j)].modulus() == 0.0));
    let minimizers = if diagonal { (0..problem.nrows()).filter(|&i| problem[(i, i)].re - emin < 1e-9).collect() } else { Vec::new() };
    Ok(AqcReport { rate: cfg.schedule.rate, success: success.min(1.0), min_gap: track.min_gap(), minimizers, state: psi })
}

/// Problem matrix `diag(costs)`.
pub fn diagonal_problem(costs: &[f64]) -> Matrix64 {
    Matrix64::from_diagonal(&Vector64::from_iterator(costs.len(), costs.iter().map(|&c| Complex64::new(c, 0.0))))
}
