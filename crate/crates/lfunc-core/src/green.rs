//! Green and GGreen functions, their adiabatic approximants, the free two-point table
//! and the Keldysh-basis probes.
//!
//! Insertions name a Hilbert-space ladder operator and the side it multiplies the kernel
//! on: `Rho::Plain` multiplies from the left (the conventional Green function side),
//! `Rho::Tilde` from the right. Equal times keep their written order (left = later),
//! so `theta(0) = 1`.

use nalgebra::ComplexField;

use crate::evolve::{hermitian_exp, interaction_s, interaction_s_l_apply_with, EvolutionConfig, LModel};
use crate::fock::{build_space, FockSpace, ModeSet, NormalOrderedHamiltonian};
use crate::lfun::{doubled_operator, gaussian_l, Doubled, LGenerator, PolyLFunctional, Route, Side};
use crate::sparse::LOperator;
use crate::{Complex64, Error, Matrix64, Result, Vector64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ladder {
    Creation,
    Annihilation,
}

impl Ladder {
    pub fn adjoint(self) -> Self {
        match self {
            Ladder::Creation => Ladder::Annihilation,
            Ladder::Annihilation => Ladder::Creation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rho {
    Plain,
    Tilde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sigma {
    pub ladder: Ladder,
    pub rho: Rho,
}

impl Sigma {
    pub const ALL: [Sigma; 4] = [
        Sigma { ladder: Ladder::Creation, rho: Rho::Plain },
        Sigma { ladder: Ladder::Annihilation, rho: Rho::Plain },
        Sigma { ladder: Ladder::Creation, rho: Rho::Tilde },
        Sigma { ladder: Ladder::Annihilation, rho: Rho::Tilde },
    ];

    pub fn doubled(self) -> Doubled {
        let side = match self.rho {
            Rho::Plain => Side::Left,
            Rho::Tilde => Side::Right,
        };
        Doubled::from_action(side, self.ladder == Ladder::Creation)
    }

    /// Name of this operator in the tilde notation, where tilde marks right
    /// multiplication and `+` marks `L_{a+ K}` / `L_{K a}`.
    pub fn notation(self) -> &'static str {
        match (self.ladder, self.rho) {
            (Ladder::Creation, Rho::Plain) => "b+",
            (Ladder::Annihilation, Rho::Plain) => "b",
            (Ladder::Annihilation, Rho::Tilde) => "b~+",
            (Ladder::Creation, Rho::Tilde) => "b~",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Insertion {
    pub mode: usize,
    pub time: f64,
    pub sigma: Sigma,
}

impl Insertion {
    pub fn new(mode: usize, time: f64, ladder: Ladder, rho: Rho) -> Self {
        Self { mode, time, sigma: Sigma { ladder, rho } }
    }
}

/// Indices in time-ordered application order: the earliest insertion acts first; ties keep
/// the written order with the leftmost counted as later.
pub fn application_order(times: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&i, &j| times[i].total_cmp(&times[j]).then(j.cmp(&i)));
    idx
}

/// `<Phi, T(A_1(t_1) ... A_n(t_n)) Phi>` with `A(t) = e^{iHt/hbar} A e^{-iHt/hbar}`.
pub fn green_fn(h: &Matrix64, phi: &Vector64, insertions: &[(Matrix64, f64)], hbar: f64) -> Result<Complex64> {
    if insertions.is_empty() {
        return Err(Error::Validation("insertion list must be non-empty".into()));
    }
    if !(hbar > 0.0) {
        return Err(Error::Validation("Green functions need hbar > 0".into()));
    }
    let times: Vec<f64> = insertions.iter().map(|x| x.1).collect();
    let mut v = phi.clone();
    for i in application_order(&times) {
        let (a, t) = &insertions[i];
        v = hermitian_exp(h, *t / hbar) * (a * (hermitian_exp(h, -*t / hbar) * v));
    }
    Ok(phi.dotc(&v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenRatio {
    pub numerator: Complex64,
    pub denominator: Complex64,
    pub value: Complex64,
}

/// Gell-Mann and Low ratio with interaction-picture insertions `e^{iH(0)t} A e^{-iH(0)t}`.
pub fn adiabatic_green(cfg: &EvolutionConfig<f64>, phi: &Vector64, insertions: &[(Matrix64, f64)]) -> Result<GreenRatio> {
    if insertions.is_empty() {
        return Err(Error::Validation("insertion list must be non-empty".into()));
    }
    let tt = cfg.schedule.horizon;
    if insertions.iter().any(|x| !(x.1 > -tt && x.1 < tt)) {
        return Err(Error::Validation("insertion times must lie inside (-T, T)".into()));
    }
    let h0 = crate::fock::build_hamiltonian(&cfg.space, &cfg.hamiltonian.free_part(), cfg.hbar)?;
    let times: Vec<f64> = insertions.iter().map(|x| x.1).collect();
    let mut v = phi.clone();
    let mut now = -tt;
    for i in application_order(&times) {
        let (a, t) = &insertions[i];
        v = interaction_s(cfg, now, *t)? * v;
        v = hermitian_exp(&h0, *t / cfg.hbar) * (a * (hermitian_exp(&h0, -*t / cfg.hbar) * v));
        now = *t;
    }
    v = interaction_s(cfg, now, tt)? * v;
    let numerator = phi.dotc(&v);
    let denominator = phi.dotc(&(interaction_s(cfg, -tt, tt)? * phi));
    if denominator.modulus() < 1e-12 {
        return Err(Error::DegenerateAmplitude(denominator.modulus()));
    }
    Ok(GreenRatio { numerator, denominator, value: numerator / denominator })
}

fn insertion_operator(space: &FockSpace<f64>, ins: &Insertion, hbar: f64, route: Route) -> Result<LOperator<f64>> {
    doubled_operator(space, ins.sigma.doubled(), ins.mode, hbar, route)
}

/// GGreen function: the time-ordered product of Heisenberg L-operators
/// `X(t) = e^{-Gt} X e^{Gt}` applied to `omega`, read at `alpha = 0`.
///
/// `coupling` multiplies the interaction in `G`. The propagation between insertion times
/// acts on vectors only; the last factor `e^{-G t_1}` is dropped because it preserves `L(0)`.
pub fn ggreen(
    space: &FockSpace<f64>,
    h: &NormalOrderedHamiltonian<f64>,
    omega: &PolyLFunctional<f64>,
    insertions: &[Insertion],
    route: Route,
) -> Result<Complex64> {
    if insertions.is_empty() {
        return Err(Error::Validation("insertion list must be non-empty".into()));
    }
    let hbar = omega.hbar();
    let cfg = EvolutionConfig::new(space, h, hbar, crate::evolve::Schedule::new(1.0)?)?.with_route(route);
    let model = LModel::new(&cfg)?;
    let ops: Vec<(f64, LOperator<f64>)> =
        insertions.iter().map(|ins| Ok((ins.time, insertion_operator(space, ins, hbar, route)?))).collect::<Result<_>>()?;
    let times: Vec<f64> = insertions.iter().map(|x| x.time).collect();
    let mut v = omega.to_vector();
    let mut now = 0.0;
    for i in application_order(&times) {
        let (t, op) = &ops[i];
        model.exp_apply(&mut v, t - now, 1.0);
        v = op.apply(&v);
        now = *t;
    }
    Ok(v[0])
}

/// Signed sum over all `2^n` plain/tilde assignments (sign `(-1)^{#tilde}`).
pub fn rho_sum(
    space: &FockSpace<f64>,
    h: &NormalOrderedHamiltonian<f64>,
    omega: &PolyLFunctional<f64>,
    insertions: &[Insertion],
    route: Route,
) -> Result<Complex64> {
    let n = insertions.len();
    let mut total = Complex64::new(0.0, 0.0);
    for mask in 0..(1usize << n) {
        let list: Vec<Insertion> = insertions
            .iter()
            .enumerate()
            .map(|(i, ins)| {
                let rho = if mask >> i & 1 == 1 { Rho::Tilde } else { Rho::Plain };
                Insertion { sigma: Sigma { rho, ..ins.sigma }, ..*ins }
            })
            .collect();
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        total += ggreen(space, h, omega, &list, route)? * sign;
    }
    Ok(total)
}

/// `<T(X_1(t_1) ... X_n(t_n) S_a(T, -T))>_omega0` with interaction-picture insertions.
pub fn adiabatic_ggreen(cfg: &EvolutionConfig<f64>, omega0: &PolyLFunctional<f64>, insertions: &[Insertion]) -> Result<Complex64> {
    if insertions.is_empty() {
        return Err(Error::Validation("insertion list must be non-empty".into()));
    }
    let tt = cfg.schedule.horizon;
    if insertions.iter().any(|x| !(x.time > -tt && x.time < tt)) {
        return Err(Error::Validation("insertion times must lie inside (-T, T)".into()));
    }
    let model = LModel::new(cfg)?;
    let n = cfg.space.dim().pow(2);
    let times: Vec<f64> = insertions.iter().map(|x| x.time).collect();
    let mut x = Matrix64::from_column_slice(n, 1, omega0.to_vector().as_slice());
    let mut now = -tt;
    for i in application_order(&times) {
        let ins = &insertions[i];
        let op = insertion_operator(&cfg.space, ins, cfg.hbar, cfg.route)?;
        x = interaction_s_l_apply_with(cfg, &model, &x, now, ins.time)?;
        // e^{-G0 t} X e^{G0 t}
        model.free_phase(&mut x, ins.time);
        x = op.apply_cols(&x);
        model.free_phase(&mut x, -ins.time);
        now = ins.time;
    }
    // the remaining S(T, t_1) preserves L(0)
    Ok(x[(0, 0)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Amplitude {
    Zero,
    N,
    NPlusHbar,
}

impl Amplitude {
    pub fn value(self, n: f64, hbar: f64) -> f64 {
        match self {
            Amplitude::Zero => 0.0,
            Amplitude::N => n,
            Amplitude::NPlusHbar => n + hbar,
        }
    }
}

/// `amplitude * exp(i sign hbar^power omega (t - tau))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub amplitude: Amplitude,
    pub sign: i8,
    pub hbar_power: u8,
}

impl Branch {
    pub fn value(&self, n: f64, omega: f64, hbar: f64, delta: f64) -> Complex64 {
        let w = omega * hbar.powi(self.hbar_power as i32) * self.sign as f64;
        Complex64::new(0.0, w * delta).exp() * self.amplitude.value(n, hbar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub first: Sigma,
    pub second: Sigma,
    /// Branch for `t >= tau` (`theta(0) = 1`).
    pub later_first: Branch,
    /// Branch for `t < tau`.
    pub earlier_first: Branch,
    /// Closed form for this pair, if it is one of the listed rows.
    pub printed: Option<&'static str>,
    /// Largest oracle mismatch seen while fixing the convention.
    pub mismatch: f64,
}

impl TableEntry {
    pub fn is_zero(&self) -> bool {
        self.later_first.amplitude == Amplitude::Zero && self.earlier_first.amplitude == Amplitude::Zero
    }
}

/// Free two-point functions `<T(X_1(t) X_2(tau))>` on the Gaussian with occupation `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorTable {
    pub n: f64,
    pub omega: f64,
    pub hbar: f64,
    pub entries: Vec<TableEntry>,
}

impl PropagatorTable {
    pub fn entry(&self, first: Sigma, second: Sigma) -> &TableEntry {
        self.entries.iter().find(|e| e.first == first && e.second == second).expect("table covers all pairs")
    }

    pub fn value(&self, first: Sigma, second: Sigma, t: f64, tau: f64) -> Complex64 {
        let e = self.entry(first, second);
        let b = if t >= tau { e.later_first } else { e.earlier_first };
        b.value(self.n, self.omega, self.hbar, t - tau)
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.is_zero()).count()
    }
}

const PRINTED_ROWS: [(&str, &str, &str); 4] = [
    ("b+", "b", "theta(t-tau) e^{i hbar w (t-tau)} n + theta(tau-t) e^{i hbar w (t-tau)} (n + hbar)"),
    ("b+", "b~+", "e^{i hbar w (t-tau)} (n + hbar)"),
    ("b~+", "b~", "same as <T(b+(t) b(tau))>"),
    ("b", "b~", "e^{i hbar w (t-tau)} n"),
];

/// Single-mode space and free Hamiltonian used as the table oracle.
fn oracle_setup(omega: f64, n_max: usize) -> Result<(FockSpace<f64>, NormalOrderedHamiltonian<f64>)> {
    let modes = ModeSet::new(vec![omega])?;
    let space = build_space(modes.clone(), n_max)?;
    Ok((space, NormalOrderedHamiltonian::free(&modes)))
}

/// Exact free two-point GGreen function on `gaussian_l(n)`.
pub fn free_two_point(n: f64, omega: f64, hbar: f64, first: Sigma, second: Sigma, t: f64, tau: f64) -> Result<Complex64> {
    let (space, h) = oracle_setup(omega, 3)?;
    let lam = gaussian_l(&space, hbar, &[n])?;
    let ins = [Insertion { mode: 0, time: t, sigma: first }, Insertion { mode: 0, time: tau, sigma: second }];
    ggreen(&space, &h, &lam, &ins, Route::Algebraic)
}

/// Builds the table with each entry's amplitude, sign and `hbar` placement fixed by the exact
/// free two-point functions; the search uses `hbar` and `hbar / 2` so the power is determined.
pub fn keldysh_table(n: f64, omega: f64, hbar: f64) -> Result<PropagatorTable> {
    if !(n >= 0.0) || !(hbar > 0.0) {
        return Err(Error::Validation("keldysh_table needs n >= 0 and hbar > 0".into()));
    }
    let deltas = [0.7, 1.3];
    let hbars = [hbar, hbar / 2.0];
    let mut entries = Vec::new();
    for first in Sigma::ALL {
        for second in Sigma::ALL {
            let pick = |sgn: f64| -> Result<(Branch, f64)> {
                let mut samples = Vec::new();
                for &hb in &hbars {
                    for &d in &deltas {
                        let d = d * sgn;
                        samples.push((hb, d, free_two_point(n, omega, hb, first, second, d, 0.0)?));
                    }
                }
                let mut best: Option<(Branch, f64)> = None;
                for amplitude in [Amplitude::Zero, Amplitude::N, Amplitude::NPlusHbar] {
                    for sign in [1i8, -1] {
                        for hbar_power in [0u8, 1] {
                            let b = Branch { amplitude, sign, hbar_power };
                            let err = samples.iter().map(|&(hb, d, z)| (b.value(n, omega, hb, d) - z).modulus()).fold(0.0, f64::max);
                            if best.as_ref().is_none_or(|x| err < x.1 - 1e-14) {
                                best = Some((b, err));
                            }
                        }
                    }
                }
                Ok(best.expect("candidates are non-empty"))
            };
            let (later, e1) = pick(1.0)?;
            let (earlier, e2) = pick(-1.0)?;
            let mismatch = e1.max(e2);
            if mismatch > 1e-8 {
                return Err(Error::Convention(format!(
                    "no candidate matches <T({}(t) {}(tau))> (mismatch {mismatch:e})",
                    first.notation(),
                    second.notation()
                )));
            }
            let printed = PRINTED_ROWS.iter().find(|r| r.0 == first.notation() && r.1 == second.notation()).map(|r| r.2);
            entries.push(TableEntry { first, second, later_first: later, earlier_first: earlier, printed, mismatch });
        }
    }
    Ok(PropagatorTable { n, omega, hbar, entries })
}

/// `(phi_qu, phi_cl)` for `phi = a(k) + a+(k)`: `phi_l - phi_r` and `(phi_l + phi_r) / 2`.
pub fn keldysh_basis(space: &FockSpace<f64>, k: usize, hbar: f64, route: Route) -> Result<(LOperator<f64>, LOperator<f64>)> {
    let op = |d| doubled_operator(space, d, k, hbar, route);
    let phi_l = op(Doubled::BTilde)?.add(&op(Doubled::BTildeDag)?);
    let phi_r = op(Doubled::B)?.add(&op(Doubled::BDag)?);
    Ok((phi_l.sub(&phi_r), phi_l.add(&phi_r).scale(Complex64::new(0.5, 0.0))))
}

/// Largest singular value.
pub fn operator_norm(op: &LOperator<f64>) -> f64 {
    op.to_dense().singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Classical,
    Quantum,
}

/// Time-ordered Keldysh-basis function of `phi = a + a+` insertions `(mode, time, field)`.
pub fn keldysh_ggreen(
    space: &FockSpace<f64>,
    h: &NormalOrderedHamiltonian<f64>,
    omega: &PolyLFunctional<f64>,
    insertions: &[(usize, f64, Field)],
) -> Result<Complex64> {
    if insertions.is_empty() {
        return Err(Error::Validation("insertion list must be non-empty".into()));
    }
    let hbar = omega.hbar();
    let cfg = EvolutionConfig::new(space, h, hbar, crate::evolve::Schedule::new(1.0)?)?.with_route(Route::Algebraic);
    let model = LModel::new(&cfg)?;
    let times: Vec<f64> = insertions.iter().map(|x| x.1).collect();
    let mut v = omega.to_vector();
    let mut now = 0.0;
    for i in application_order(&times) {
        let (k, t, f) = insertions[i];
        let (qu, cl) = keldysh_basis(space, k, hbar, Route::Algebraic)?;
        model.exp_apply(&mut v, t - now, 1.0);
        v = match f {
            Field::Quantum => qu.apply(&v),
            Field::Classical => cl.apply(&v),
        };
        now = t;
    }
    Ok(v[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct HbarProbe {
    pub hbars: Vec<f64>,
    /// `||result(hbar) - result(0)||` per grid value (the first entry is `hbar = 0`).
    pub distances: Vec<f64>,
    /// `distance(hbar_i) / distance(hbar_{i+1})` over the non-zero grid values.
    pub ratios: Vec<f64>,
    pub results: Vec<PolyLFunctional<f64>>,
}

/// Evolves the same coefficient vector at every `hbar` (algebraic route, so `hbar = 0` is valid)
/// and measures the distance to the `hbar = 0` result.
pub fn hbar_probe(cfg: &EvolutionConfig<f64>, l: &PolyLFunctional<f64>, hbars: &[f64], t0: f64, t1: f64) -> Result<HbarProbe> {
    if hbars.first() != Some(&0.0) {
        return Err(Error::Validation("hbar grid must start at 0".into()));
    }
    let mut results = Vec::new();
    for &hb in hbars {
        let c = cfg.with_hbar(hb).with_route(Route::Algebraic);
        let input = PolyLFunctional::from_vector(&cfg.space, hb, &l.to_vector());
        results.push(crate::evolve::evolve_l(&c, &input, t0, t1)?);
    }
    let distances: Vec<f64> = results.iter().map(|r| (r.coefficients() - results[0].coefficients()).norm()).collect();
    let ratios = distances[1..].windows(2).map(|w| w[0] / w[1]).collect();
    Ok(HbarProbe { hbars: hbars.to_vec(), distances, ratios, results })
}

/// Generator norm check used by the structural `hbar = 0` assertion: builds the algebraic
/// generator at `hbar = 0` and reports whether every entry is finite.
pub fn zero_hbar_generator_is_finite(space: &FockSpace<f64>, h: &NormalOrderedHamiltonian<f64>) -> Result<bool> {
    let g = LGenerator::build(space, h, 0.0, Route::Algebraic)?;
    Ok(g.interaction().csr().values().iter().all(|z| z.re.is_finite() && z.im.is_finite()))
}
