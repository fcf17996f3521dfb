//! One function per subcommand; each returns a [`CommandOutput`] without touching the filesystem.

use lfunc_core::dressing::*;
use lfunc_core::fock::{build_hamiltonian, build_space, FockSpace};
use lfunc_core::green::*;
use lfunc_core::lfun::*;
use lfunc_core::scatter::*;
use lfunc_core::{Complex64, Matrix64, Vector64};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::aqc::{draw_instances, Instance};
use crate::error::{CliError, InModule, Result};
use crate::report::*;
use crate::scenario::{Model, Scenario};
use crate::Command;

fn positive_hbar(s: &Scenario) -> Result<f64> {
    let h = s.hbar0();
    if h > 0.0 {
        Ok(h)
    } else {
        Err(CliError::Scenario("this command needs hbar > 0 (first entry of `hbar`)".into()))
    }
}

fn unit_hbar(s: &Scenario) -> Result<()> {
    if s.hbar0() == 1.0 {
        Ok(())
    } else {
        Err(CliError::Scenario("scattering commands run at hbar = 1 (first entry of `hbar`)".into()))
    }
}

fn decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Adds a strict-decrease property, or a warning when there is nothing to compare.
fn trend(out: &mut CommandOutput, name: &str, xs: &[f64]) {
    if xs.len() < 2 {
        out.warnings.push(format!("{name}: single point, trend not checked"));
    } else {
        let last = *xs.last().unwrap_or(&f64::NAN);
        out.properties.push(Property::holds(name, last, "strictly decreasing", decreasing(xs)));
    }
}

fn pure_kernel(v: &Vector64) -> Matrix64 {
    v * v.adjoint()
}

/// `||P_out H x||` with `H` built on a space large enough to hold one application of every term,
/// and `P_out` the projector on occupations above the scenario cutoff. Columns of `x` are states.
pub fn cutoff_leakage(model: &Model, hbar: f64, x: &Matrix64) -> Result<f64> {
    let space = &model.space;
    let extra = model.hamiltonian.terms.iter().map(|t| t.creators.len()).max().unwrap_or(1).max(1);
    let big = build_space(space.modes().clone(), space.n_max() + extra).within("fock")?;
    let h = build_hamiltonian(&big, &model.hamiltonian, hbar).within("fock")?;
    let map: Vec<usize> = (0..space.dim()).map(|i| big.index(&space.occupations(i))).collect();
    let outside: Vec<usize> = (0..big.dim()).filter(|&j| big.occupations(j).iter().any(|&n| n > space.n_max())).collect();
    let mut s = 0.0;
    for c in 0..x.ncols() {
        for &j in &outside {
            let mut z = Complex64::new(0.0, 0.0);
            for (i, &bi) in map.iter().enumerate() {
                z += h[(j, bi)] * x[(i, c)];
            }
            s += z.norm_sqr();
        }
    }
    Ok(s.sqrt())
}

fn column(v: &Vector64) -> Matrix64 {
    Matrix64::from_column_slice(v.len(), 1, v.as_slice())
}

fn l_leakage(model: &Model, l: &PolyLFunctional<f64>) -> Result<f64> {
    let k = density_from_l(l).within("lfun")?.kernel;
    cutoff_leakage(model, l.hbar(), &k)
}

/// Ground state of `H` reached by tracking the free vacuum from `g = 0` to `g = 1`.
pub fn dressed_vacuum(model: &Model, hbar: f64) -> Result<Vector64> {
    let family = Family::from_hamiltonian(&model.space, &model.hamiltonian, hbar).within("dressing")?;
    let indices = sector_indices(&model.space, natural_sector(&model.space, 0).within("dressing")?).within("dressing")?;
    let track = eigen_track(&family, &indices, &Start::Vector(model.space.vacuum()), &uniform_grid(200), TrackOptions::default()).within("dressing")?;
    Ok(track.last().1.clone())
}

pub fn dress(s: &Scenario) -> Result<CommandOutput> {
    let model = s.model()?;
    let hbar = positive_hbar(s)?;
    let space = &model.space;
    let mut occ = vec![0; space.mode_count()];
    occ[0] = 1;
    let occ = s.dress.occupation.clone().unwrap_or(occ);
    let idx = space.index(&occ);
    let family = Family::from_hamiltonian(space, &model.hamiltonian, hbar).within("dressing")?;
    let indices = sector_indices(space, natural_sector(space, idx).within("dressing")?).within("dressing")?;
    let start = Start::Vector(space.basis_vector(idx));
    let l0 = l_from_density(space, &pure_kernel(&space.basis_vector(idx)), hbar).within("lfun")?;
    let rows = s
        .schedule
        .rates
        .par_iter()
        .map(|&a| {
            let cfg = s.config(&model, hbar, a)?;
            let r = dress_state(&family, &indices, &start, &cfg).within("dressing")?;
            let rl = dress_l(&l0, &cfg).within("dressing")?;
            Ok((a, r, rl, cfg.rtol))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = CommandOutput::new(Command::Dress);
    out.table = Table::new(&["a", "fidelity", "phase_mismatch", "residual", "min_gap", "fidelity_error", "min_eigenvalue"]);
    let mut entries = Vec::new();
    for (a, r, rl, rtol) in &rows {
        let budget = ErrorBudget { truncation_tail: r.tail_bound.max(rl.tail_bound), integrator: *rtol, cutoff_leakage: cutoff_leakage(&model, hbar, &column(&r.state))? };
        out.budget = out.budget.max(budget);
        let cells = vec![num(*a), num(r.fidelity), num(r.phase_mismatch), num(rl.stationarity_residual), num(r.min_gap), num(1.0 - r.fidelity), opt(rl.min_eigenvalue)];
        out.table.push(cells, budget);
        entries.push(json!({
            "a": a, "fidelity": r.fidelity, "phase_mismatch": r.phase_mismatch, "phase_integral": r.phase_integral,
            "stationarity_residual": rl.stationarity_residual, "min_gap": r.min_gap, "min_eigenvalue": rl.min_eigenvalue,
            "steps": r.steps, "error_budget": budget,
        }));
    }
    let fe: Vec<f64> = rows.iter().map(|r| 1.0 - r.1.fidelity).collect();
    let pm: Vec<f64> = rows.iter().map(|r| r.1.phase_mismatch).collect();
    let st: Vec<f64> = rows.iter().map(|r| r.2.stationarity_residual).collect();
    trend(&mut out, "fidelity_error_decreasing", &fe);
    trend(&mut out, "phase_mismatch_decreasing", &pm);
    trend(&mut out, "stationarity_residual_decreasing", &st);
    let min_eig = rows.iter().filter_map(|r| r.2.min_eigenvalue).fold(f64::INFINITY, f64::min);
    out.properties.push(Property::holds("dressed_l_is_a_state", min_eig, ">= -1e-8", min_eig >= -1e-8));
    out.report = json!({ "occupation": occ, "rates": entries });
    let last = rows.last().expect("rates are non-empty");
    out.signature = vec![last.1.fidelity, last.1.phase_mismatch, last.2.stationarity_residual];
    out.summary = vec![("fidelity".into(), last.1.fidelity), ("phase_mismatch".into(), last.1.phase_mismatch), ("residual".into(), last.2.stationarity_residual)];
    Ok(out)
}

pub fn aqc(s: &Scenario) -> Result<CommandOutput> {
    let model = s.model()?;
    let hbar = positive_hbar(s)?;
    let instances: Vec<Instance> = draw_instances(&model.space, &s.aqc, s.seed, hbar)?;
    let driver = aqc_driver(&model.space, hbar).within("dressing")?;
    let results = instances
        .par_iter()
        .map(|inst| {
            let problem = diagonal_problem(&inst.costs);
            s.schedule
                .rates
                .iter()
                .map(|&a| {
                    let cfg = s.config(&model, hbar, a)?;
                    let r = aqc_solve(&problem, &driver, &cfg).within("dressing")?;
                    Ok((r, cfg.schedule.tail_bound(1.0), cfg.rtol))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = CommandOutput::new(Command::Aqc);
    out.table = Table::new(&["instance", "a", "success", "min_gap", "minimizer"]);
    let mut worst_final = f64::INFINITY;
    let mut monotone = true;
    let mut reports = Vec::new();
    for (i, (inst, rs)) in instances.iter().zip(&results).enumerate() {
        for (r, tail, rtol) in rs {
            let budget = ErrorBudget { truncation_tail: *tail, integrator: *rtol, cutoff_leakage: 0.0 };
            out.budget = out.budget.max(budget);
            out.table.push(vec![i.to_string(), num(r.rate), num(r.success), num(r.min_gap), format!("{:?}", r.minimizers)], budget);
        }
        let succ: Vec<f64> = rs.iter().map(|x| x.0.success).collect();
        monotone &= succ.windows(2).all(|w| w[1] >= w[0]);
        worst_final = worst_final.min(*succ.last().unwrap_or(&0.0));
        reports.push(json!({ "costs": inst.costs, "gap": inst.gap, "minimizer": inst.minimizer, "success": succ }));
    }
    let thr = s.aqc.success_threshold;
    out.properties.push(Property::holds("success_at_slowest_schedule", worst_final, &format!(">= {thr}"), worst_final >= thr));
    if s.schedule.rates.len() > 1 {
        out.properties.push(Property::holds("success_non_decreasing", worst_final, "non-decreasing as a decreases", monotone));
    } else {
        out.warnings.push("single rate: monotonicity not checked".into());
    }
    out.report = json!({ "instances": reports });
    out.signature = results.iter().map(|rs| rs.last().map(|x| x.0.success).unwrap_or(f64::NAN)).collect();
    out.summary = vec![("worst_success".into(), worst_final)];
    Ok(out)
}

fn two_point(space: &FockSpace<f64>, k: usize, t: f64, hbar: f64) -> Result<[(Matrix64, f64); 2]> {
    let a = space.annihilation(k, hbar).within("fock")?;
    Ok([(a.clone(), t), (a.adjoint(), 0.0)])
}

pub fn green(s: &Scenario) -> Result<CommandOutput> {
    let model = s.model()?;
    let hbar = positive_hbar(s)?;
    let space = &model.space;
    let hm = build_hamiltonian(space, &model.hamiltonian, hbar).within("fock")?;
    let phi = dressed_vacuum(&model, hbar)?;
    let k = s.green.mode;
    let oracle: Vec<Complex64> = s
        .green
        .times
        .iter()
        .map(|&t| green_fn(&hm, &phi, &two_point(space, k, t, hbar)?, hbar).within("green"))
        .collect::<Result<_>>()?;
    let per_rate = s
        .schedule
        .rates
        .par_iter()
        .map(|&a| {
            let cfg = s.config(&model, hbar, a)?;
            let vals = s
                .green
                .times
                .iter()
                .map(|&t| adiabatic_green(&cfg, &space.vacuum(), &two_point(space, k, t, hbar)?).within("green"))
                .collect::<Result<Vec<_>>>()?;
            let tail = cfg.schedule.tail_bound(1.0);
            Ok((a, vals, tail, cfg.rtol))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = CommandOutput::new(Command::Green);
    out.table = Table::new(&["a", "t_minus_tau", "re", "im", "oracle_re", "oracle_im", "abs_err"]);
    let leak = cutoff_leakage(&model, hbar, &column(&phi))?;
    let mut errs = Vec::new();
    let mut entries = Vec::new();
    for (a, vals, tail, rtol) in &per_rate {
        let budget = ErrorBudget { truncation_tail: *tail, integrator: *rtol, cutoff_leakage: leak };
        out.budget = out.budget.max(budget);
        let mut worst = 0.0f64;
        for ((t, v), o) in s.green.times.iter().zip(vals).zip(&oracle) {
            let e = (v.value - o).norm();
            worst = worst.max(e);
            out.table.push(vec![num(*a), num(*t), num(v.value.re), num(v.value.im), num(o.re), num(o.im), num(e)], budget);
        }
        errs.push(worst);
        entries.push(json!({ "a": a, "max_abs_err": worst, "values": vals.iter().map(|v| cjson(v.value)).collect::<Vec<_>>() }));
    }
    let last = *errs.last().unwrap_or(&f64::NAN);
    out.properties.push(Property::below("oracle_agreement_at_smallest_a", last, s.green.tolerance));
    if errs.len() > 1 {
        out.properties.push(Property::holds("error_shrinks_with_a", last, "<= error at the largest a", last <= errs[0]));
    }
    out.report = json!({ "mode": k, "times": s.green.times, "oracle": oracle.iter().map(|z| cjson(*z)).collect::<Vec<_>>(), "rates": entries });
    out.signature = per_rate.last().map(|r| r.1.iter().flat_map(|v| [v.value.re, v.value.im]).collect()).unwrap_or_default();
    out.summary = vec![("max_abs_err".into(), last)];
    Ok(out)
}

pub fn ggreen_cmd(s: &Scenario) -> Result<CommandOutput> {
    let model = s.model()?;
    let hbar = positive_hbar(s)?;
    let space = &model.space;
    let route = s.route(hbar);
    let hm = build_hamiltonian(space, &model.hamiltonian, hbar).within("fock")?;
    let phi = dressed_vacuum(&model, hbar)?;
    let l = l_from_density(space, &pure_kernel(&phi), hbar).within("lfun")?;
    let k = s.green.mode;
    let mut out = CommandOutput::new(Command::Ggreen);
    out.table = Table::new(&["t_minus_tau", "re", "im", "oracle_re", "oracle_im", "abs_err", "rho_sum"]);
    let budget = ErrorBudget { truncation_tail: 0.0, integrator: f64::EPSILON, cutoff_leakage: cutoff_leakage(&model, hbar, &column(&phi))? };
    out.budget = budget;
    let rows = s
        .green
        .times
        .par_iter()
        .map(|&t| {
            let ins = [Insertion::new(k, t, Ladder::Annihilation, Rho::Plain), Insertion::new(k, 0.0, Ladder::Creation, Rho::Plain)];
            let v = ggreen(space, &model.hamiltonian, &l, &ins, route).within("green")?;
            let o = green_fn(&hm, &phi, &two_point(space, k, t, hbar)?, hbar).within("green")?;
            let r = rho_sum(space, &model.hamiltonian, &l, &ins, route).within("green")?;
            Ok((t, v, o, r.norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut worst, mut worst_rho) = (0.0f64, 0.0f64);
    for (t, v, o, r) in &rows {
        let e = (v - o).norm();
        worst = worst.max(e);
        worst_rho = worst_rho.max(*r);
        out.table.push(vec![num(*t), num(v.re), num(v.im), num(o.re), num(o.im), num(e), num(*r)], budget);
    }
    out.properties.push(Property::below("plain_ggreen_matches_green_function", worst, 1e-8));
    out.properties.push(Property::below("rho_sum_vanishes", worst_rho, 1e-8));
    out.report = json!({
        "mode": k, "route": format!("{route:?}"),
        "values": rows.iter().map(|r| json!({ "t_minus_tau": r.0, "value": cjson(r.1), "oracle": cjson(r.2), "rho_sum": r.3 })).collect::<Vec<_>>(),
    });
    out.signature = rows.iter().flat_map(|r| [r.1.re, r.1.im]).collect();
    out.summary = vec![("max_abs_err".into(), worst), ("rho_sum".into(), worst_rho)];
    Ok(out)
}

/// Two- and three-point insertion lists used by the rho-sum checks.
pub fn rho_lists(modes: usize) -> Vec<Vec<Insertion>> {
    let k2 = modes.min(2) - 1;
    vec![
        vec![Insertion::new(0, 0.4, Ladder::Annihilation, Rho::Plain), Insertion::new(0, -0.5, Ladder::Creation, Rho::Plain)],
        vec![
            Insertion::new(0, 0.4, Ladder::Annihilation, Rho::Plain),
            Insertion::new(k2, 1.1, Ladder::Creation, Rho::Plain),
            Insertion::new(k2, -0.5, Ladder::Creation, Rho::Plain),
        ],
        vec![
            Insertion::new(k2, 0.9, Ladder::Creation, Rho::Plain),
            Insertion::new(0, 0.2, Ladder::Annihilation, Rho::Plain),
            Insertion::new(0, -0.7, Ladder::Annihilation, Rho::Plain),
        ],
    ]
}

/// Largest rho-sum over [`rho_lists`] on a Gaussian state, on both routes where available.
pub fn rho_sum_residual(model: &Model, hbar: f64, n: f64) -> Result<f64> {
    let space = &model.space;
    let l = gaussian_l(space, hbar, &vec![n; space.mode_count()]).within("lfun")?;
    let routes: &[Route] = if hbar > 0.0 { &[Route::Algebraic, Route::Truncated] } else { &[Route::Algebraic] };
    let mut worst = 0.0f64;
    for list in rho_lists(space.mode_count()) {
        for &route in routes {
            worst = worst.max(rho_sum(space, &model.hamiltonian, &l, &list, route).within("green")?.norm());
        }
    }
    Ok(worst)
}

pub struct TableCheck {
    pub max_err: f64,
    pub zero_max: f64,
    pub zero_count: usize,
    pub printed_count: usize,
    /// Off-table entries that are not zero.
    pub swapped: Vec<(Sigma, Sigma)>,
    /// `max |G(s1 t, s2 tau) - G(s2 tau, s1 t)|` over those entries and `t != tau`.
    pub swap_residual: f64,
    pub table: PropagatorTable,
}

pub fn check_table(n: f64, omega: f64, hbar: f64, times: &[(f64, f64)]) -> Result<TableCheck> {
    let table = keldysh_table(n, omega, hbar).within("green")?;
    let (mut max_err, mut zero_max, mut swap_residual) = (0.0f64, 0.0f64, 0.0f64);
    let mut swapped = Vec::new();
    for e in &table.entries {
        for &(t, tau) in times {
            let o = free_two_point(n, omega, hbar, e.first, e.second, t, tau).within("green")?;
            max_err = max_err.max((table.value(e.first, e.second, t, tau) - o).norm());
            if e.is_zero() {
                zero_max = zero_max.max(o.norm());
            }
        }
        if e.printed.is_none() && !e.is_zero() {
            swapped.push((e.first, e.second));
            for &(t, tau) in times.iter().filter(|(t, tau)| t != tau) {
                let o = free_two_point(n, omega, hbar, e.first, e.second, t, tau).within("green")?;
                let p = free_two_point(n, omega, hbar, e.second, e.first, tau, t).within("green")?;
                swap_residual = swap_residual.max((o - p).norm());
            }
        }
    }
    let zero_count = table.entries.iter().filter(|e| e.is_zero()).count();
    let printed_count = table.entries.iter().filter(|e| e.printed.is_some()).count();
    Ok(TableCheck { max_err, zero_max, zero_count, printed_count, swapped, swap_residual, table })
}

pub fn keldysh_check(s: &Scenario) -> Result<CommandOutput> {
    let model = s.model()?;
    let hbar = positive_hbar(s)?;
    let ks = &s.keldysh;
    let omega = s.modes.energies[ks.mode];
    let chk = check_table(ks.n, omega, hbar, &ks.times)?;
    let rho = rho_sum_residual(&model, hbar, ks.n)?;
    let mut out = CommandOutput::new(Command::KeldyshCheck);
    out.table = Table::new(&["first", "second", "printed", "zero", "t", "tau", "re", "im", "oracle_re", "oracle_im", "abs_err"]);
    let budget = ErrorBudget { truncation_tail: 0.0, integrator: f64::EPSILON, cutoff_leakage: 0.0 };
    out.budget = budget;
    let mut entries = Vec::new();
    for e in &chk.table.entries {
        for &(t, tau) in &ks.times {
            let v = chk.table.value(e.first, e.second, t, tau);
            let o = free_two_point(ks.n, omega, hbar, e.first, e.second, t, tau).within("green")?;
            out.table.push(
                vec![
                    e.first.notation().into(),
                    e.second.notation().into(),
                    e.printed.unwrap_or("").into(),
                    e.is_zero().to_string(),
                    num(t),
                    num(tau),
                    num(v.re),
                    num(v.im),
                    num(o.re),
                    num(o.im),
                    num((v - o).norm()),
                ],
                budget,
            );
        }
        entries.push(json!({
            "first": e.first.notation(), "second": e.second.notation(), "printed": e.printed,
            "later_first": format!("{:?}", e.later_first), "earlier_first": format!("{:?}", e.earlier_first),
            "convention_mismatch": e.mismatch,
        }));
    }
    out.properties.push(Property::below("table_matches_oracle", chk.max_err, 1e-8));
    out.properties.push(Property::below("zero_entries_vanish", chk.zero_max, 1e-10));
    out.properties.push(Property::below("off_table_nonzero_entries_are_swaps", chk.swap_residual, 1e-8));
    out.properties.push(Property::below("rho_sum_vanishes", rho, 1e-8));
    out.report = json!({
        "n": ks.n, "omega": omega, "hbar": hbar, "entries": entries,
        "nonzero": chk.table.nonzero_count(), "zero": chk.zero_count, "printed": chk.printed_count,
        "off_table_nonzero": chk.swapped.iter().map(|(a, b)| format!("({}, {})", a.notation(), b.notation())).collect::<Vec<_>>(),
        "rho_sum": rho,
    });
    out.signature = chk.table.entries.iter().map(|e| chk.table.value(e.first, e.second, 0.7, 0.0).norm()).collect();
    out.summary = vec![("max_abs_err".into(), chk.max_err), ("rho_sum".into(), rho)];
    Ok(out)
}

/// Normalized pure state from real amplitudes (padded with zeros).
pub fn amplitude_state(space: &FockSpace<f64>, amps: &[f64]) -> Result<Vector64> {
    if amps.len() > space.dim() {
        return Err(CliError::Scenario(format!("at `classical.amplitudes`: {} entries for dimension {}", amps.len(), space.dim())));
    }
    let mut v = Vector64::zeros(space.dim());
    for (i, &x) in amps.iter().enumerate() {
        v[i] = Complex64::new(x, 0.0);
    }
    let n = v.norm();
    if !(n > 0.0) {
        return Err(CliError::Scenario("at `classical.amplitudes`: state has zero norm".into()));
    }
    Ok(v / Complex64::new(n, 0.0))
}

pub struct ClassicalLimit {
    pub probe: HbarProbe,
    /// `||phi_qu(h)|| / ||phi_qu(h / 2)||` for each positive `h`.
    pub qu_ratios: Vec<f64>,
    pub qu_at_zero: f64,
    pub generator_finite: bool,
    pub zero_run_finite: bool,
}

pub fn classical_limit_data(s: &Scenario, model: &Model) -> Result<ClassicalLimit> {
    let space = &model.space;
    let mut hbars = vec![0.0];
    hbars.extend(&s.classical.hbars);
    let psi = amplitude_state(space, &s.classical.amplitudes)?;
    let l = l_from_density(space, &pure_kernel(&psi), 1.0).within("lfun")?;
    let cfg = s.config(model, 1.0, s.schedule.rates[0])?.with_route(Route::Algebraic);
    let (t0, t1) = s.classical.window;
    let probe = hbar_probe(&cfg, &l, &hbars, t0, t1).within("green")?;
    let k = s.keldysh.mode;
    let qn = |h: f64| keldysh_basis(space, k, h, Route::Algebraic).map(|b| operator_norm(&b.0)).within("green");
    let qu_ratios = s.classical.hbars.iter().map(|&h| Ok(qn(h)? / qn(h / 2.0)?)).collect::<Result<Vec<_>>>()?;
    let generator_finite = zero_hbar_generator_is_finite(space, &model.hamiltonian).within("green")?;
    let zero_run_finite = probe.results[0].coefficients().iter().all(|z| z.re.is_finite() && z.im.is_finite());
    Ok(ClassicalLimit { probe, qu_ratios, qu_at_zero: qn(0.0)?, generator_finite, zero_run_finite })
}

pub fn classical_limit(s: &Scenario) -> Result<CommandOutput> {
    let model = s.model()?;
    let c = classical_limit_data(s, &model)?;
    let p = &c.probe;
    let mut out = CommandOutput::new(Command::ClassicalLimit);
    out.table = Table::new(&["hbar", "distance", "ratio", "qu_norm_ratio"]);
    let cfg = s.config(&model, 1.0, s.schedule.rates[0])?;
    let budget = ErrorBudget { truncation_tail: cfg.schedule.tail_bound(1.0), integrator: cfg.rtol, cutoff_leakage: 0.0 };
    out.budget = budget;
    for (i, (&h, &d)) in p.hbars.iter().zip(&p.distances).enumerate() {
        let ratio = if i >= 2 { Some(p.ratios[i - 2]) } else { None };
        let qr = if i >= 1 { Some(c.qu_ratios[i - 1]) } else { None };
        out.table.push(vec![num(h), num(d), opt(ratio), opt(qr)], budget);
    }
    let (lo, hi) = s.classical.ratio_band;
    let worst = p.ratios.iter().copied().map(|r| if r < lo { lo - r } else if r > hi { r - hi } else { 0.0 }).fold(0.0, f64::max);
    let ok = !p.ratios.is_empty() && p.ratios.iter().all(|r| (lo..=hi).contains(r));
    let farthest = p.ratios.iter().copied().fold(f64::NAN, |m, r| if m.is_nan() || (r - 2.0).abs() > (m - 2.0).abs() { r } else { m });
    out.properties.push(Property::holds("distance_is_linear_in_hbar", farthest, &format!("ratios in [{lo}, {hi}]"), ok));
    let qerr = c.qu_ratios.iter().map(|r| (r - 2.0).abs()).fold(0.0, f64::max);
    out.properties.push(Property::below("quantum_field_linear_in_hbar", qerr, 1e-10));
    out.properties.push(Property::holds("quantum_field_vanishes_at_zero", c.qu_at_zero, "== 0", c.qu_at_zero == 0.0));
    out.properties.push(Property::holds("zero_hbar_is_division_free", 0.0, "finite generator and run", c.generator_finite && c.zero_run_finite));
    out.report = json!({ "hbars": p.hbars, "distances": p.distances, "ratios": p.ratios, "qu_ratios": c.qu_ratios, "window": s.classical.window });
    out.signature = p.distances.clone();
    out.summary = vec![("max_ratio_excursion".into(), worst)];
    Ok(out)
}

/// Unimodular mode factors relating the two dressings: `U_E = diag(prod rho^{-n}) U_r` up to `|A B|`.
pub fn relative_factors(pf: &PhaseFactors) -> Vec<Complex64> {
    pf.r.iter().zip(&pf.r_energy).map(|(r, e)| Complex64::from_polar(1.0, -(e - r.re))).collect()
}

pub fn smatrix(s: &Scenario) -> Result<CommandOutput> {
    unit_hbar(s)?;
    let model = s.model()?;
    let space = &model.space;
    let cfg = s.config(&model, 1.0, s.schedule.rates[0])?;
    let rep = renormalized_s(&cfg, &s.schedule.rates).within("scatter")?;
    let mut out = CommandOutput::new(Command::Smatrix);
    out.warnings.extend(rep.warnings.iter().cloned());
    out.table = Table::new(&["a", "cauchy", "vac_residual", "one_particle_residual", "route_discrepancy", "n_equivalence"]);
    let mut entries = Vec::new();
    let mut vac = Vec::new();
    let mut nres = Vec::new();
    let mut phases1 = Vec::new();
    let mut disc = Vec::new();
    for (i, r) in rep.per_rate.iter().enumerate() {
        let pf = &r.phases;
        let c = s.config(&model, 1.0, pf.rate)?;
        let low: Vec<usize> = (0..space.dim()).filter(|&i| space.total_number(i) <= 1).collect();
        let cols = Matrix64::from_fn(space.dim(), low.len(), |i, j| pf.s_hat[(i, low[j])]);
        let leak = cutoff_leakage(&model, 1.0, &cols)?;
        let budget = ErrorBudget { truncation_tail: c.schedule.tail_bound(1.0), integrator: c.rtol, cutoff_leakage: leak };
        out.budget = out.budget.max(budget);
        let cauchy = if i > 0 { Some(rep.cauchy[i - 1]) } else { None };
        let vac_res = (r.dressed_energy[(0, 0)] - Complex64::new(1.0, 0.0)).norm();
        let one = r.one_particle_phase.iter().copied().fold(0.0, f64::max);
        let rho = relative_factors(pf);
        let eq = n_equivalence(space, &r.dressed, &r.dressed_energy, &rho, &rho).within("scatter")?;
        let d = pf.route_discrepancy().into_iter().fold(0.0, f64::max);
        vac.push(vac_res);
        nres.push(eq.residual);
        phases1.push(one);
        disc.push(d);
        out.table.push(vec![num(pf.rate), opt(cauchy), num(vac_res), num(one), num(d), num(eq.residual)], budget);
        let mut e = json!({
            "a": pf.rate,
            "phases": {
                "vacuum_amplitude": cjson(pf.vacuum_amplitude),
                "one_particle": pf.one_particle.iter().map(|z| cjson(*z)).collect::<Vec<_>>(),
                "r": pf.r.iter().map(|z| cjson(*z)).collect::<Vec<_>>(),
                "r_energy": pf.r_energy,
                "route_discrepancy": pf.route_discrepancy(),
                "one_particle_phase": r.one_particle_phase,
                "delta": pf.delta,
            },
            "invariance_residuals": {
                "vacuum_element": vac_res,
                "form_residual": r.form_residual,
                "unitarity_defect": r.unitarity_defect,
                "one_particle_modulus_defect": r.one_particle_modulus_defect,
                "n_equivalence": eq.residual,
            },
            "error_budget": budget,
        });
        if let Some(c) = cauchy {
            e["cauchy_prev"] = json!(c);
            e["cauchy_low_prev"] = json!(rep.cauchy_low[i - 1]);
        }
        if space.dim() <= 64 {
            e["matrix"] = mjson(&r.dressed_energy);
        }
        entries.push(e);
    }
    trend(&mut out, "cauchy_decreasing", &rep.cauchy);
    let worst_vac = vac.iter().copied().fold(0.0, f64::max);
    out.properties.push(Property::below("dressed_vacuum_element_is_one", worst_vac, 1e-12));
    let form = rep.per_rate.iter().map(|r| r.form_residual).fold(0.0, f64::max);
    out.properties.push(Property::below("element_form_matches_operator_form", form, 1e-10));
    trend(&mut out, "one_particle_phase_decreasing", &phases1);
    trend(&mut out, "route_discrepancy_decreasing", &disc);
    let last_eq = *nres.last().unwrap_or(&f64::NAN);
    out.properties.push(Property::below("dressings_n_equivalent_at_smallest_a", last_eq, 1e-6));
    out.report = Value::Array(entries);
    out.signature = rep.per_rate.last().map(|r| r.dressed_energy.iter().flat_map(|z| [z.re, z.im]).collect()).unwrap_or_default();
    out.summary = vec![("one_particle_phase".into(), *phases1.last().unwrap_or(&f64::NAN)), ("route_discrepancy".into(), *disc.last().unwrap_or(&f64::NAN))];
    Ok(out)
}

/// Seeded random kernels supported on states with at most one quantum.
pub fn seeded_kernels(space: &FockSpace<f64>, count: usize, seed: u64) -> Vec<Matrix64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut next = move || rng.gen::<f64>();
    let support: Vec<usize> = (0..space.dim()).filter(|&i| space.total_number(i) <= 1).collect();
    (0..count).map(|_| random_kernel::<f64>(space.dim(), &support, &mut next)).collect()
}

pub fn mode_function(s: &Scenario) -> Vec<Complex64> {
    let n = s.modes.energies.len();
    let raw: Vec<Complex64> = match &s.inclusive.f {
        Some(f) => f.iter().map(|&(re, im)| Complex64::new(re, im)).collect(),
        None => vec![Complex64::new(1.0, 0.0); n],
    };
    let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    raw.into_iter().map(|z| z / norm).collect()
}

pub fn inclusive_smatrix(s: &Scenario) -> Result<CommandOutput> {
    unit_hbar(s)?;
    let model = s.model()?;
    let space = &model.space;
    let cfg = s.config(&model, 1.0, s.schedule.rates[0])?;
    let f = mode_function(s);
    let kernels = seeded_kernels(space, s.inclusive.kernels, s.seed);
    let rep = inclusive_s(&cfg, &s.schedule.rates, &f, &kernels).within("scatter")?;
    let mut out = CommandOutput::new(Command::InclusiveSmatrix);
    out.warnings.extend(rep.warnings.iter().cloned());
    out.table = Table::new(&["a", "cauchy", "vac_residual", "one_particle_residual", "hats_residual", "min_eigenvalue"]);
    let mut entries = Vec::new();
    for (i, r) in rep.per_rate.iter().enumerate() {
        let c = s.config(&model, 1.0, r.rate)?;
        let leak = r.outputs.iter().map(|o| l_leakage(&model, o)).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        let budget = ErrorBudget { truncation_tail: c.schedule.tail_bound(1.0), integrator: c.rtol, cutoff_leakage: leak };
        out.budget = out.budget.max(budget);
        let cauchy = if i > 0 { Some(rep.cauchy[i - 1]) } else { None };
        out.table.push(vec![num(r.rate), opt(cauchy), num(r.vacuum_residual), num(r.one_particle_residual), num(r.hats_residual), num(r.min_eigenvalue)], budget);
        let occupations: Vec<f64> = (0..space.mode_count()).map(|k| expected_occupation(&r.outputs[1], k).unwrap_or(f64::NAN)).collect();
        let mut e = json!({
            "a": r.rate,
            "phases": { "shift": r.shift },
            "invariance_residuals": {
                "vacuum": r.vacuum_residual, "one_particle": r.one_particle_residual,
                "hats": r.hats_residual, "min_eigenvalue": r.min_eigenvalue,
            },
            "one_particle_occupations": occupations,
            "error_budget": budget,
        });
        if let Some(c) = cauchy {
            e["cauchy_prev"] = json!(c);
        }
        entries.push(e);
    }
    let one: Vec<f64> = rep.per_rate.iter().map(|r| r.one_particle_residual).collect();
    let vac: Vec<f64> = rep.per_rate.iter().map(|r| r.vacuum_residual).collect();
    trend(&mut out, "one_particle_residual_decreasing", &one);
    trend(&mut out, "vacuum_residual_decreasing", &vac);
    let last = rep.per_rate.last().expect("rates are non-empty");
    out.properties.push(Property::below("vacuum_invariant_at_smallest_a", last.vacuum_residual, 1e-8));
    if !kernels.is_empty() {
        out.properties.push(Property::below("kernel_sandwich_at_smallest_a", last.hats_residual, 1e-6));
    }
    let min_eig = rep.per_rate.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min);
    out.properties.push(Property::holds("outputs_are_states", min_eig, ">= -1e-8", min_eig >= -1e-8));
    out.report = json!({ "f": f.iter().map(|z| cjson(*z)).collect::<Vec<_>>(), "kernels": kernels.len(), "rates": entries });
    out.signature = last.outputs.iter().flat_map(|o| o.to_vector().iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>()).collect();
    out.summary = vec![("one_particle_residual".into(), last.one_particle_residual), ("vacuum_residual".into(), last.vacuum_residual)];
    Ok(out)
}
