//! Scenario files: a JSON tree describing modes, interaction, schedule and per-command settings.

use std::collections::BTreeMap;

use lfunc_core::evolve::{EvolutionConfig, Profile, Schedule};
use lfunc_core::fock::{build_space, Conservation, FockSpace, ModeSet, NormalOrderedHamiltonian, Term};
use lfunc_core::lfun::Route;
use lfunc_core::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, InModule, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub modes: ModesSpec,
    pub n_max: usize,
    #[serde(default)]
    pub gamma: Vec<GammaEntry>,
    /// Missing conjugate entries are added (and reported) instead of rejected.
    #[serde(default)]
    pub auto_hermitian: bool,
    #[serde(default)]
    pub conservation: ConservationSpec,
    /// Permits interaction terms with fewer than three ladder operators.
    #[serde(default)]
    pub relaxed: bool,
    #[serde(default)]
    pub g: f64,
    #[serde(default = "default_hbar")]
    pub hbar: Vec<f64>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dress: DressSpec,
    #[serde(default)]
    pub green: GreenSpec,
    #[serde(default)]
    pub keldysh: KeldyshSpec,
    #[serde(default)]
    pub classical: ClassicalSpec,
    #[serde(default)]
    pub inclusive: InclusiveSpec,
    #[serde(default)]
    pub aqc: AqcSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSpec {
    pub energies: Vec<f64>,
    #[serde(default)]
    pub momentum: Option<MomentumSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentumSpec {
    pub labels: Vec<u32>,
    pub modulus: u32,
}

/// One coefficient `re + i im` of `a+(modes_out) a(modes_in)`, with `m` creators and `n` annihilators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaEntry {
    pub m: usize,
    pub n: usize,
    pub modes_out: Vec<usize>,
    pub modes_in: Vec<usize>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConservationSpec {
    #[default]
    Strict,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    pub profile: String,
    pub rates: Vec<f64>,
    /// Horizon `T = horizon_factor / a`.
    pub horizon_factor: f64,
    pub tail_tolerance: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self { profile: "gaussian".into(), rates: vec![0.2, 0.1, 0.05], horizon_factor: 4.3, tail_tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteSpec {
    /// Truncated for `hbar > 0`, algebraic at `hbar = 0`.
    #[default]
    Auto,
    Algebraic,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSpec {
    pub rtol: f64,
    pub step_factor: f64,
    pub route: RouteSpec,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self { rtol: 1e-10, step_factor: 0.1, route: RouteSpec::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DressSpec {
    /// Free basis state to dress; defaults to one quantum in mode 0.
    pub occupation: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenSpec {
    pub mode: usize,
    /// Values of `t - tau` (with `tau = 0`).
    pub times: Vec<f64>,
    pub tolerance: f64,
}

impl Default for GreenSpec {
    fn default() -> Self {
        Self { mode: 0, times: (0..=8).map(|i| 0.25 * i as f64).collect(), tolerance: 5e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeldyshSpec {
    pub n: f64,
    pub mode: usize,
    pub times: Vec<(f64, f64)>,
}

impl Default for KeldyshSpec {
    fn default() -> Self {
        Self { n: 0.5, mode: 0, times: vec![(0.7, 0.0), (0.0, 0.7), (1.5, 0.4)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalSpec {
    /// Positive hbar values; the probe prepends `hbar = 0`.
    pub hbars: Vec<f64>,
    pub window: (f64, f64),
    /// Real amplitudes of the input pure state in the Fock basis (normalized on use).
    pub amplitudes: Vec<f64>,
    pub ratio_band: (f64, f64),
}

impl Default for ClassicalSpec {
    fn default() -> Self {
        Self { hbars: vec![1.0, 0.5, 0.25, 0.125], window: (-1.0, 1.0), amplitudes: vec![0.6, 0.5, 0.4, 0.3], ratio_band: (1.6, 2.4) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InclusiveSpec {
    /// One-particle mode function as `[re, im]` pairs; defaults to equal weights.
    pub f: Option<Vec<(f64, f64)>>,
    /// Number of seeded random kernels (supported on at most one quantum).
    pub kernels: usize,
}

impl Default for InclusiveSpec {
    fn default() -> Self {
        Self { f: None, kernels: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AqcSpec {
    pub qubits: usize,
    pub instances: usize,
    /// Instances whose interpolation gap falls below this are redrawn.
    pub min_gap: f64,
    /// Costs are drawn uniformly from `[0, cost_scale)`.
    pub cost_scale: f64,
    /// Minimum separation between the lowest and second-lowest cost.
    pub min_separation: f64,
    pub success_threshold: f64,
}

impl Default for AqcSpec {
    fn default() -> Self {
        Self { qubits: 2, instances: 10, min_gap: 0.5, cost_scale: 4.0, min_separation: 0.1, success_threshold: 0.99 }
    }
}

fn default_hbar() -> Vec<f64> {
    vec![1.0]
}

/// Mode set, Fock space and Hamiltonian built from a validated scenario.
#[derive(Debug, Clone)]
pub struct Model {
    pub space: FockSpace<f64>,
    pub hamiltonian: NormalOrderedHamiltonian<f64>,
    /// Notes raised while building, e.g. auto-completed conjugates.
    pub flags: Vec<String>,
}

/// Parses and validates a scenario; errors name the offending path or entry.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Scenario(format!("at `{path}`: {}", e.inner()))
    })?;
    s.validate()?;
    Ok(s)
}

fn bad(path: impl std::fmt::Display, msg: impl std::fmt::Display) -> CliError {
    CliError::Scenario(format!("at `{path}`: {msg}"))
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let count = self.modes.energies.len();
        if count == 0 {
            return Err(bad("modes.energies", "at least one mode is required"));
        }
        if let Some(m) = &self.modes.momentum {
            if m.labels.len() != count {
                return Err(bad("modes.momentum.labels", format!("expected {count} labels, found {}", m.labels.len())));
            }
        }
        if self.n_max == 0 {
            return Err(bad("n_max", "must be at least 1"));
        }
        for (i, e) in self.gamma.iter().enumerate() {
            if e.m != e.modes_out.len() {
                return Err(bad(format!("gamma[{i}].m"), format!("m = {} but modes_out has {} entries", e.m, e.modes_out.len())));
            }
            if e.n != e.modes_in.len() {
                return Err(bad(format!("gamma[{i}].n"), format!("n = {} but modes_in has {} entries", e.n, e.modes_in.len())));
            }
            for (field, list) in [("modes_out", &e.modes_out), ("modes_in", &e.modes_in)] {
                if let Some((j, k)) = list.iter().enumerate().find(|(_, &k)| k >= count) {
                    return Err(bad(format!("gamma[{i}].{field}[{j}]"), format!("mode {k} does not exist ({count} modes)")));
                }
            }
            if !(e.re.is_finite() && e.im.is_finite()) {
                return Err(bad(format!("gamma[{i}]"), "coefficient is not finite"));
            }
            if e.m + e.n == 0 {
                return Err(bad(format!("gamma[{i}]"), "constant terms are not allowed"));
            }
        }
        if self.hbar.is_empty() || self.hbar.iter().any(|h| !(*h >= 0.0 && h.is_finite())) {
            return Err(bad("hbar", "need a non-empty list of finite non-negative values"));
        }
        if Profile::from_name(&self.schedule.profile).is_none() {
            return Err(bad("schedule.profile", format!("unknown profile `{}`", self.schedule.profile)));
        }
        check_rates(&self.schedule.rates).map_err(|m| bad("schedule.rates", m))?;
        if !(self.schedule.horizon_factor > 0.0) || !(self.schedule.tail_tolerance > 0.0) {
            return Err(bad("schedule", "horizon_factor and tail_tolerance must be positive"));
        }
        if !(self.integrator.rtol > 0.0 && self.integrator.rtol <= 1e-4) {
            return Err(bad("integrator.rtol", "must lie in (0, 1e-4]"));
        }
        if !(self.integrator.step_factor > 0.0) {
            return Err(bad("integrator.step_factor", "must be positive"));
        }
        if self.green.mode >= count {
            return Err(bad("green.mode", format!("mode {} does not exist", self.green.mode)));
        }
        if self.keldysh.mode >= count {
            return Err(bad("keldysh.mode", format!("mode {} does not exist", self.keldysh.mode)));
        }
        if let Some(occ) = &self.dress.occupation {
            if occ.len() != count || occ.iter().any(|&n| n > self.n_max) {
                return Err(bad("dress.occupation", "must list one occupation per mode, each at most n_max"));
            }
        }
        if let Some(f) = &self.inclusive.f {
            if f.len() != count {
                return Err(bad("inclusive.f", format!("expected {count} entries")));
            }
        }
        if self.classical.hbars.iter().any(|h| !(*h > 0.0)) {
            return Err(bad("classical.hbars", "values must be positive (hbar = 0 is added automatically)"));
        }
        self.model()?;
        Ok(())
    }

    pub fn profile(&self) -> Profile {
        Profile::from_name(&self.schedule.profile).unwrap_or(Profile::Gaussian)
    }

    pub fn mode_set(&self) -> Result<ModeSet<f64>> {
        let modes = ModeSet::new(self.modes.energies.clone()).map_err(|e| bad("modes.energies", e))?;
        match &self.modes.momentum {
            Some(m) => modes.with_momentum(m.labels.clone(), m.modulus).map_err(|e| bad("modes.momentum", e)),
            None => Ok(modes),
        }
    }

    pub fn model(&self) -> Result<Model> {
        let modes = self.mode_set()?;
        let space = build_space(modes.clone(), self.n_max).map_err(|e| bad("n_max", e))?;
        let mut h = NormalOrderedHamiltonian::with_free(&modes, self.g);
        h.relaxed = self.relaxed;
        let mut flags = Vec::new();
        let key = |out: &[usize], inp: &[usize]| {
            let (mut o, mut i) = (out.to_vec(), inp.to_vec());
            o.sort_unstable();
            i.sort_unstable();
            (o, i)
        };
        let mut table: BTreeMap<(Vec<usize>, Vec<usize>), Complex64> = BTreeMap::new();
        for e in &self.gamma {
            *table.entry(key(&e.modes_out, &e.modes_in)).or_default() += Complex64::new(e.re, e.im);
        }
        for (i, e) in self.gamma.iter().enumerate() {
            let t = Term::new(e.modes_out.clone(), e.modes_in.clone(), Complex64::new(e.re, e.im));
            if !self.relaxed && t.degree() < 3 {
                return Err(bad(format!("gamma[{i}]"), format!("{} ladder operators; set `relaxed` to allow fewer than three", t.degree())));
            }
            if self.conservation == ConservationSpec::Strict {
                if let Some(m) = &self.modes.momentum {
                    let sum = |v: &[usize]| v.iter().map(|&k| m.labels[k] as u64).sum::<u64>() % m.modulus as u64;
                    if sum(&e.modes_out) != sum(&e.modes_in) {
                        return Err(bad(format!("gamma[{i}]"), "violates momentum conservation"));
                    }
                }
            }
            h.terms.push(t);
            let own = table[&key(&e.modes_out, &e.modes_in)];
            let partner_key = key(&e.modes_in, &e.modes_out);
            let partner = table.get(&partner_key).copied().unwrap_or_default();
            if (own - partner.conj()).norm() > 1e-12 * (1.0 + own.norm()) {
                if !self.auto_hermitian {
                    return Err(bad(format!("gamma[{i}]"), format!(
                        "a+{:?} a{:?} has no matching conjugate entry (set auto_hermitian to complete it)",
                        e.modes_out, e.modes_in
                    )));
                }
                if !table.contains_key(&partner_key) {
                    let adj = Term::new(e.modes_in.clone(), e.modes_out.clone(), Complex64::new(e.re, -e.im));
                    h.terms.push(adj);
                    flags.push(format!("gamma[{i}]: conjugate auto-completed"));
                } else {
                    return Err(bad(format!("gamma[{i}]"), "conjugate entry exists but does not match"));
                }
            }
        }
        let conservation = match self.conservation {
            ConservationSpec::Strict => Conservation::Strict,
            ConservationSpec::Off => Conservation::Off,
        };
        h.validate(&modes, conservation).map_err(|e| bad("gamma", e))?;
        if self.relaxed {
            flags.push("relaxed mode: low-degree interaction terms permitted".into());
        }
        Ok(Model { space, hamiltonian: h, flags })
    }

    pub fn route(&self, hbar: f64) -> Route {
        match self.integrator.route {
            RouteSpec::Algebraic => Route::Algebraic,
            RouteSpec::Truncated => Route::Truncated,
            RouteSpec::Auto if hbar > 0.0 => Route::Truncated,
            RouteSpec::Auto => Route::Algebraic,
        }
    }

    pub fn schedule(&self, rate: f64) -> Result<Schedule<f64>> {
        Schedule::with_horizon(self.profile(), rate, self.schedule.horizon_factor / rate, self.schedule.tail_tolerance).within("evolve")
    }

    pub fn config(&self, model: &Model, hbar: f64, rate: f64) -> Result<EvolutionConfig<f64>> {
        let cfg = EvolutionConfig::new(&model.space, &model.hamiltonian, hbar, self.schedule(rate)?).within("evolve")?;
        cfg.with_route(self.route(hbar)).with_step_factor(self.integrator.step_factor).with_rtol(self.integrator.rtol).within("evolve")
    }

    /// First entry of the hbar list.
    pub fn hbar0(&self) -> f64 {
        self.hbar[0]
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Rates must be positive and strictly decreasing.
pub fn check_rates(rates: &[f64]) -> std::result::Result<(), String> {
    if rates.is_empty() {
        return Err("need at least one rate".into());
    }
    if rates.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err("rates must be positive".into());
    }
    if rates.windows(2).any(|w| w[1] >= w[0]) {
        return Err("rates must be strictly decreasing".into());
    }
    Ok(())
}

pub const S1: &str = include_str!("../scenarios/s1.json");
pub const S1_QUARTIC: &str = include_str!("../scenarios/s1_quartic.json");
pub const S2: &str = include_str!("../scenarios/s2.json");
pub const S3: &str = include_str!("../scenarios/s3.json");
pub const AQC: &str = include_str!("../scenarios/aqc.json");

/// Bundled scenario by name (`s1`, `s1_quartic`, `s2`, `s3`, `aqc`).
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "s1" => Some(S1),
        "s1_quartic" => Some(S1_QUARTIC),
        "s2" => Some(S2),
        "s3" => Some(S3),
        "aqc" => Some(AQC),
        _ => None,
    }
}
