//! Phase-factor renormalization of the adiabatic S-matrix, N-equivalence and the inclusive
//! scattering matrix on L-functionals. Everything here runs at `hbar = 1`.

use nalgebra::ComplexField;
use rayon::prelude::*;

use crate::dressing::{natural_sector, phase_integral, sector_indices, Family, Start};
use crate::evolve::{interaction_checkpoints, interaction_s_l_apply_with, step_plan, EvolutionConfig, HilbertModel, LModel};
use crate::fock::FockSpace;
use crate::lfun::{density_from_l, expected_occupation, l_from_density, min_eigenvalue, one_particle_l, PolyLFunctional};
use crate::{Complex64, Error, Matrix64, Result, Vector64};

const PHASE_INTERVALS: usize = 2000;
const CHECKPOINTS: usize = 4000;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFactors {
    pub rate: f64,
    /// `<0|S_a|0>^{-1/2}`.
    pub vacuum_amplitude: Complex64,
    /// `<p|S_a|p>^{1/2}` for every mode.
    pub one_particle: Vec<Complex64>,
    /// `i ln(A B(p))` with continuously unwrapped arguments.
    pub r: Vec<Complex64>,
    /// `int_{-T}^0 (E_p - E_vac - eps_p)` from tracked sector energies.
    pub r_energy: Vec<f64>,
    /// Largest `| |A| - 1 |` or `| |B(p)| - 1 |`.
    pub delta: f64,
    pub s_hat: Matrix64,
}

impl PhaseFactors {
    /// Mode-by-mode `|wrap(Re r - r_E)|`.
    pub fn route_discrepancy(&self) -> Vec<f64> {
        self.r.iter().zip(&self.r_energy).map(|(r, e)| wrap(r.re - e).abs()).collect()
    }
}

fn wrap(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    x - tau * (x / tau).round()
}

fn require_unit_hbar(cfg: &EvolutionConfig<f64>) -> Result<()> {
    if cfg.hbar != 1.0 {
        return Err(Error::Validation("scattering quantities are defined at hbar = 1".into()));
    }
    Ok(())
}

fn one_particle_index(space: &FockSpace<f64>, k: usize) -> usize {
    let mut occ = vec![0; space.mode_count()];
    occ[k] = 1;
    space.index(&occ)
}

/// Sector-tracked energy integral `int_{-T}^0 (E(h(t)) - E(0)) dt` for the free basis state `idx`.
fn energy_shift(space: &FockSpace<f64>, family: &Family, cfg: &EvolutionConfig<f64>, idx: usize) -> Result<f64> {
    let indices = sector_indices(space, natural_sector(space, idx)?)?;
    let start = Start::Vector(space.basis_vector(idx));
    Ok(phase_integral(family, &indices, &start, cfg, -cfg.schedule.horizon, 0.0, PHASE_INTERVALS)?.value)
}

/// Amplitudes from `S_a = S(T, -T)`; arguments are unwrapped along `S(t, -T)`.
pub fn phase_factors(cfg: &EvolutionConfig<f64>) -> Result<PhaseFactors> {
    require_unit_hbar(cfg)?;
    let space = &cfg.space;
    let tt = cfg.schedule.horizon;
    let model = HilbertModel::new(cfg)?;
    let plan = step_plan(cfg, -tt, tt)?;
    let every = (plan.steps / CHECKPOINTS).max(1);
    let probes: Vec<usize> = std::iter::once(0).chain((0..space.mode_count()).map(|k| one_particle_index(space, k))).collect();
    let mut args = vec![0.0; probes.len()];
    let mut last = vec![Complex64::new(1.0, 0.0); probes.len()];
    let mut s_hat = Matrix64::identity(space.dim(), space.dim());
    for (_, s) in interaction_checkpoints(cfg, &model, plan, every) {
        for (j, &i) in probes.iter().enumerate() {
            let z = s[(i, i)];
            if z.modulus() < 1e-12 {
                return Err(Error::DegenerateAmplitude(z.modulus()));
            }
            args[j] += (z / last[j]).argument();
            last[j] = z;
        }
        s_hat = s;
    }
    let log = |j: usize| Complex64::new(last[j].modulus().ln(), args[j]);
    let vacuum_amplitude = (log(0) * -0.5).exp();
    let one_particle: Vec<Complex64> = (1..probes.len()).map(|j| (log(j) * 0.5).exp()).collect();
    let r = (1..probes.len()).map(|j| Complex64::new(0.0, 1.0) * (log(0) * -0.5 + log(j) * 0.5)).collect();

    let family = Family::from_hamiltonian(space, &cfg.hamiltonian, cfg.hbar)?;
    let e_vac = energy_shift(space, &family, cfg, 0)?;
    let r_energy = (0..space.mode_count())
        .map(|k| Ok(energy_shift(space, &family, cfg, one_particle_index(space, k))? - e_vac))
        .collect::<Result<Vec<_>>>()?;
    let delta = std::iter::once(vacuum_amplitude).chain(one_particle.iter().copied()).map(|z| (z.modulus() - 1.0).abs()).fold(0.0, f64::max);
    Ok(PhaseFactors { rate: cfg.schedule.rate, vacuum_amplitude, one_particle, r, r_energy, delta, s_hat })
}

/// Diagonal of `U = exp(i sum_k r(k) a+(k) a(k))` in the Fock basis.
pub fn number_phase(space: &FockSpace<f64>, r: &[Complex64]) -> Vector64 {
    Vector64::from_fn(space.dim(), |i, _| {
        let s: Complex64 = space.occupations(i).iter().zip(r).map(|(&n, &rk)| rk * n as f64).sum();
        (Complex64::new(0.0, 1.0) * s).exp()
    })
}

/// `U S U / <0|S|0>` with `U` diagonal.
pub fn dress(s_hat: &Matrix64, u: &Vector64) -> Matrix64 {
    let s00 = s_hat[(0, 0)];
    Matrix64::from_fn(s_hat.nrows(), s_hat.ncols(), |i, j| u[i] * s_hat[(i, j)] * u[j] / s00)
}

/// Element form `<p|S_a|q> A^{2-m-n} / (prod B(p_i) prod B(q_j))`.
pub fn element_form(space: &FockSpace<f64>, pf: &PhaseFactors) -> Matrix64 {
    let weight: Vec<Complex64> = (0..space.dim())
        .map(|i| {
            let occ = space.occupations(i);
            let mut w = Complex64::new(1.0, 0.0);
            for (k, &n) in occ.iter().enumerate() {
                w /= (pf.vacuum_amplitude * pf.one_particle[k]).powi(n as i32);
            }
            w
        })
        .collect();
    let a2 = pf.vacuum_amplitude * pf.vacuum_amplitude;
    Matrix64::from_fn(space.dim(), space.dim(), |i, j| pf.s_hat[(i, j)] * a2 * weight[i] * weight[j])
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenormalizedRate {
    pub phases: PhaseFactors,
    /// Dressed with the amplitude phases `r`.
    pub dressed: Matrix64,
    /// Dressed with the energy-integral phases `r_E`.
    pub dressed_energy: Matrix64,
    /// `max |operator form - element form|`.
    pub form_residual: f64,
    /// `|arg|` of the one-particle diagonal of `dressed_energy`.
    pub one_particle_phase: Vec<f64>,
    /// `max | |one-particle diagonal of dressed_energy| - 1 |`.
    pub one_particle_modulus_defect: f64,
    /// `|| D D* - 1 ||` for `dressed_energy`.
    pub unitarity_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringReport {
    pub rates: Vec<f64>,
    pub per_rate: Vec<RenormalizedRate>,
    /// Frobenius distances between consecutive `dressed_energy` matrices.
    pub cauchy: Vec<f64>,
    /// The same distances restricted to states with at most one particle.
    pub cauchy_low: Vec<f64>,
    pub warnings: Vec<String>,
}

fn check_rates(rates: &[f64]) -> Result<()> {
    if rates.is_empty() {
        return Err(Error::Validation("rate list must be non-empty".into()));
    }
    if rates.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Validation("rates must be strictly decreasing".into()));
    }
    Ok(())
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn restricted_distance(space: &FockSpace<f64>, a: &Matrix64, b: &Matrix64) -> f64 {
    let low: Vec<usize> = (0..space.dim()).filter(|&i| space.total_number(i) <= 1).collect();
    let mut s = 0.0;
    for &i in &low {
        for &j in &low {
            s += (a[(i, j)] - b[(i, j)]).norm_sqr();
        }
    }
    s.sqrt()
}

pub fn renormalized_s(cfg: &EvolutionConfig<f64>, rates: &[f64]) -> Result<ScatteringReport> {
    check_rates(rates)?;
    let space = &cfg.space;
    let per_rate = rates
        .par_iter()
        .map(|&a| {
            let c = cfg.with_schedule(cfg.schedule.with_rate(a)?);
            let phases = phase_factors(&c)?;
            let dressed = dress(&phases.s_hat, &number_phase(space, &phases.r));
            let re: Vec<Complex64> = phases.r_energy.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let dressed_energy = dress(&phases.s_hat, &number_phase(space, &re));
            let form_residual = (element_form(space, &phases) - &dressed).iter().map(|z| z.modulus()).fold(0.0, f64::max);
            let diag: Vec<Complex64> = (0..space.mode_count()).map(|k| dressed_energy[(one_particle_index(space, k), one_particle_index(space, k))]).collect();
            let one_particle_phase = diag.iter().map(|z| z.argument().abs()).collect();
            let one_particle_modulus_defect = diag.iter().map(|z| (z.modulus() - 1.0).abs()).fold(0.0, f64::max);
            let n = space.dim();
            let unitarity_defect = (&dressed_energy * dressed_energy.adjoint() - Matrix64::identity(n, n)).norm();
            Ok(RenormalizedRate { phases, dressed, dressed_energy, form_residual, one_particle_phase, one_particle_modulus_defect, unitarity_defect })
        })
        .collect::<Result<Vec<_>>>()?;
    let cauchy: Vec<f64> = per_rate.windows(2).map(|w| (&w[0].dressed_energy - &w[1].dressed_energy).norm()).collect();
    let cauchy_low = per_rate.windows(2).map(|w| restricted_distance(space, &w[0].dressed_energy, &w[1].dressed_energy)).collect();
    let mut warnings = Vec::new();
    if rates.len() < 2 {
        warnings.push("single rate: no Cauchy distances".to_string());
    } else if !decreasing(&cauchy) {
        warnings.push(format!("Cauchy distances are not decreasing: {cauchy:?}"));
    }
    Ok(ScatteringReport { rates: rates.to_vec(), per_rate, cauchy, cauchy_low, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NEquivalence {
    /// `max |S' - U1 S U2|`.
    pub residual: f64,
    pub equivalent: bool,
    /// `max |S' - U1 S U1^{-1}|`.
    pub s_residual: f64,
    pub s_equivalent: bool,
}

/// Diagonal of the operator with `U a(k) U^{-1} = r(k) a(k)`, i.e. `prod_k r(k)^{-n_k}`.
pub fn multiplicative_operator(space: &FockSpace<f64>, r: &[Complex64]) -> Result<Vector64> {
    if r.len() != space.mode_count() {
        return Err(Error::Validation("mode function has the wrong length".into()));
    }
    if r.iter().any(|z| (z.modulus() - 1.0).abs() > 1e-12) {
        return Err(Error::Validation("mode functions must be unimodular".into()));
    }
    Ok(Vector64::from_fn(space.dim(), |i, _| {
        space.occupations(i).iter().zip(r).fold(Complex64::new(1.0, 0.0), |acc, (&n, &rk)| acc / rk.powi(n as i32))
    }))
}

pub fn n_equivalence(space: &FockSpace<f64>, s: &Matrix64, s_prime: &Matrix64, r1: &[Complex64], r2: &[Complex64]) -> Result<NEquivalence> {
    let u1 = multiplicative_operator(space, r1)?;
    let u2 = multiplicative_operator(space, r2)?;
    let mut residual = 0.0f64;
    let mut s_residual = 0.0f64;
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            residual = residual.max((s_prime[(i, j)] - u1[i] * s[(i, j)] * u2[j]).modulus());
            s_residual = s_residual.max((s_prime[(i, j)] - u1[i] * s[(i, j)] / u1[j]).modulus());
        }
    }
    Ok(NEquivalence { residual, equivalent: residual < 1e-8, s_residual, s_equivalent: s_residual < 1e-8 })
}

/// `U_a` on coefficient space: the monomial with degrees `(m, n)` gets `exp(i s.(n - m))`.
pub fn coefficient_phase(space: &FockSpace<f64>, s: &[f64]) -> Vector64 {
    let d = space.dim();
    let w: Vec<f64> = (0..d).map(|i| space.occupations(i).iter().zip(s).map(|(&n, &sk)| sk * n as f64).sum()).collect();
    Vector64::from_fn(d * d, |p, _| Complex64::new(0.0, w[p % d] - w[p / d]).exp())
}

/// `U_a S_a U_a` applied to the columns of `x`.
pub fn inclusive_apply(cfg: &EvolutionConfig<f64>, model: &LModel<f64>, shift: &[f64], x: &Matrix64) -> Result<Matrix64> {
    let u = coefficient_phase(&cfg.space, shift);
    let tt = cfg.schedule.horizon;
    let mut y = Matrix64::from_fn(x.nrows(), x.ncols(), |i, j| u[i] * x[(i, j)]);
    y = interaction_s_l_apply_with(cfg, model, &y, -tt, tt)?;
    for (i, mut row) in y.row_iter_mut().enumerate() {
        row *= u[i];
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusiveRate {
    pub rate: f64,
    /// `s_a(p) = int_{-T}^0 (E_p - E_vac - eps_p)`.
    pub shift: Vec<f64>,
    pub one_particle_residual: f64,
    pub vacuum_residual: f64,
    /// `max_K ||S L_K - L_{S_d K S_d*}||` over the supplied kernels.
    pub hats_residual: f64,
    /// Smallest eigenvalue among the reconstructed output kernels.
    pub min_eigenvalue: f64,
    pub outputs: Vec<PolyLFunctional<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusiveReport {
    pub rates: Vec<f64>,
    pub per_rate: Vec<InclusiveRate>,
    /// Distances between consecutive outputs, summed over the inputs.
    pub cauchy: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Inclusive S on the vacuum, the one-particle functional of `f` and the given kernels.
///
/// Outputs are ordered as `[vacuum, L_f, L_K...]`.
pub fn inclusive_s(cfg: &EvolutionConfig<f64>, rates: &[f64], f: &[Complex64], kernels: &[Matrix64]) -> Result<InclusiveReport> {
    check_rates(rates)?;
    require_unit_hbar(cfg)?;
    let space = &cfg.space;
    let vacuum = PolyLFunctional::constant(space, 1.0, Complex64::new(1.0, 0.0));
    let lf = one_particle_l(space, 1.0, f)?;
    let mut inputs = vec![vacuum.clone(), lf.clone()];
    for k in kernels {
        inputs.push(l_from_density(space, k, 1.0)?);
    }
    let n = space.dim().pow(2);
    let x = Matrix64::from_fn(n, inputs.len(), |i, j| inputs[j].coefficients()[(i / space.dim(), i % space.dim())]);
    let mut per_rate = Vec::new();
    for &a in rates {
        let c = cfg.with_schedule(cfg.schedule.with_rate(a)?);
        let pf = phase_factors(&c)?;
        let model = LModel::new(&c)?;
        let y = inclusive_apply(&c, &model, &pf.r_energy, &x)?;
        let outputs: Vec<PolyLFunctional<f64>> = (0..y.ncols()).map(|j| PolyLFunctional::from_vector(space, 1.0, &y.column(j).clone_owned())).collect();
        let u = number_phase(space, &pf.r_energy.iter().map(|&s| Complex64::new(s, 0.0)).collect::<Vec<_>>());
        let sd = Matrix64::from_fn(space.dim(), space.dim(), |i, j| u[i] * pf.s_hat[(i, j)] * u[j]);
        let mut hats_residual = 0.0f64;
        for (k, kern) in kernels.iter().enumerate() {
            let expected = l_from_density(space, &(&sd * kern * sd.adjoint()), 1.0)?;
            hats_residual = hats_residual.max(outputs[k + 2].distance(&expected));
        }
        let mut min_eig = f64::INFINITY;
        for o in &outputs {
            min_eig = min_eig.min(min_eigenvalue(&density_from_l(o)?.kernel));
        }
        per_rate.push(InclusiveRate {
            rate: a,
            shift: pf.r_energy.clone(),
            one_particle_residual: outputs[1].distance(&lf),
            vacuum_residual: outputs[0].distance(&vacuum),
            hats_residual,
            min_eigenvalue: min_eig,
            outputs,
        });
    }
    let cauchy: Vec<f64> = per_rate
        .windows(2)
        .map(|w| w[0].outputs.iter().zip(&w[1].outputs).map(|(p, q)| p.distance(q)).sum())
        .collect();
    let mut warnings = Vec::new();
    if rates.len() < 2 {
        warnings.push("single rate: no Cauchy distances".to_string());
    } else if !decreasing(&cauchy) {
        warnings.push(format!("Cauchy distances are not decreasing: {cauchy:?}"));
    }
    Ok(InclusiveReport { rates: rates.to_vec(), per_rate, cauchy, warnings })
}

/// Standalone form of the kernel-sandwich check at the configured rate.
pub fn verify_hats(cfg: &EvolutionConfig<f64>, kernels: &[Matrix64]) -> Result<f64> {
    if kernels.is_empty() {
        return Err(Error::Validation("need at least one kernel".into()));
    }
    let f = vec![Complex64::new(1.0, 0.0); cfg.space.mode_count()];
    let report = inclusive_s(cfg, &[cfg.schedule.rate], &f, kernels)?;
    Ok(report.per_rate[0].hats_residual)
}

/// `expected_occupation` of the output on each detector mode.
pub fn inclusive_observables(out: &PolyLFunctional<f64>, detectors: &[usize]) -> Result<Vec<(usize, f64)>> {
    detectors.iter().map(|&k| Ok((k, expected_occupation(out, k)?))).collect()
}
