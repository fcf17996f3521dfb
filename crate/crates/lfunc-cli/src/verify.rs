//! Scenario-independent invariant suite run by `lfunc verify`.

use lfunc_core::evolve::{evolve_l, evolve_state, State};
use lfunc_core::fock::{build_hamiltonian, ccr_residual, hermiticity_defect, FockSpace};
use lfunc_core::green::{keldysh_basis, operator_norm, zero_hbar_generator_is_finite};
use lfunc_core::lfun::*;
use lfunc_core::{Complex64, Matrix64, Vector64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::commands::rho_sum_residual;
use crate::error::{InModule, Result};
use crate::report::*;
use crate::scenario::Scenario;
use crate::Command;

const SAMPLES: usize = 20;

fn kernels(space: &FockSpace<f64>, support: &[usize], rng: &mut ChaCha8Rng) -> Vec<Matrix64> {
    let mut next = || rng.gen::<f64>();
    (0..SAMPLES).map(|_| random_kernel::<f64>(space.dim(), support, &mut next)).collect()
}

fn image(space: &FockSpace<f64>, op: Doubled, k: usize, kern: &Matrix64, hbar: f64) -> Result<Vector64> {
    let (side, creation) = op.action();
    let a = space.annihilation(k, hbar).within("fock")?;
    let x = if creation { a.adjoint() } else { a };
    let prod = match side {
        Side::Left => &x * kern,
        Side::Right => kern * &x,
    };
    Ok(l_from_density(space, &prod, hbar).within("lfun")?.to_vector())
}

pub fn verify(s: &Scenario) -> Result<CommandOutput> {
    let model = s.model()?;
    let space = &model.space;
    let h = &model.hamiltonian;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let all: Vec<usize> = (0..space.dim()).collect();
    let safe = space.safe_indices();
    let positive: Vec<f64> = s.hbar.iter().copied().filter(|&x| x > 0.0).collect();
    let mut props = Vec::new();

    let mut herm = 0.0f64;
    let mut ccr = 0.0f64;
    for &hb in &positive {
        herm = herm.max(hermiticity_defect(&build_hamiltonian(space, h, hb).within("fock")?));
        ccr = ccr.max(ccr_residual(space, hb).within("fock")?);
    }
    props.push(Property::below("hamiltonian_hermitian", herm, 1e-12));
    props.push(Property::below("ccr_on_cutoff_safe_subspace", ccr, 1e-12));

    let mut round = 0.0f64;
    for k in kernels(space, &all, &mut rng) {
        let l = l_from_density(space, &k, 1.0).within("lfun")?;
        round = round.max((density_from_l(&l).within("lfun")?.kernel - &k).norm());
    }
    props.push(Property::below("l_kernel_round_trip", round, 1e-12));

    let ops = [Doubled::B, Doubled::BDag, Doubled::BTilde, Doubled::BTildeDag];
    let (mut images, mut comm, mut cross, mut diff) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &hb in &positive {
        let sets: Vec<DoubledOperators<f64>> = (0..space.mode_count()).map(|k| doubled_operators(space, k, hb, Route::Truncated)).collect::<lfunc_core::Result<_>>().within("lfun")?;
        for k in kernels(space, &all, &mut rng) {
            let l = l_from_density(space, &k, hb).within("lfun")?.to_vector();
            for (mode, set) in sets.iter().enumerate() {
                for op in ops {
                    images = images.max((set.get(op).apply(&l) - image(space, op, mode, &k, hb)?).norm());
                }
            }
        }
        for k in kernels(space, &safe, &mut rng) {
            let l = l_from_density(space, &k, hb).within("lfun")?.to_vector();
            let hl = &l * Complex64::new(hb, 0.0);
            for (i, a) in sets.iter().enumerate() {
                comm = comm.max((a.b.commutator(&a.b_dag).apply(&l) - &hl).norm());
                comm = comm.max((a.b_tilde.commutator(&a.b_tilde_dag).apply(&l) - &hl).norm());
                for (j, b) in sets.iter().enumerate() {
                    for x in [&a.b, &a.b_dag] {
                        for y in [&b.b_tilde, &b.b_tilde_dag] {
                            cross = cross.max(x.commutator(y).apply(&l).norm());
                        }
                    }
                    if i != j {
                        cross = cross.max(a.b.commutator(&b.b_dag).apply(&l).norm());
                    }
                }
            }
        }
    }
    for &hb in s.hbar.iter() {
        for k in 0..space.mode_count() {
            let c = c_operators(space, k).within("lfun")?;
            let o = doubled_operators(space, k, hb, Route::Algebraic).within("lfun")?;
            let d1 = o.b_dag.sub(&o.b_tilde).add(&c.c2_dag.scale(Complex64::new(hb, 0.0)));
            let d2 = o.b.sub(&o.b_tilde_dag).add(&c.c1_dag.scale(Complex64::new(hb, 0.0)));
            diff = diff.max(d1.max_abs()).max(d2.max_abs());
        }
    }
    props.push(Property::below("doubled_operators_are_multiplication_images", images, 1e-10));
    props.push(Property::below("doubled_ccr", comm, 1e-10));
    props.push(Property::below("doubled_actions_commute", cross, 1e-10));
    props.push(Property::below("doubled_hbar_differences", diff, 1e-12));

    if let Some(&hb) = positive.first() {
        let cfg = s.config(&model, hb, s.schedule.rates[0])?.with_route(Route::Truncated);
        let k = kernels(space, &all, &mut rng).remove(0);
        let l = l_from_density(space, &k, hb).within("lfun")?;
        let t0 = -cfg.schedule.horizon;
        let lt = evolve_l(&cfg, &l, t0, 0.0).within("evolve")?;
        let State::Kernel(kt) = evolve_state(&cfg, &State::Kernel(k), t0, 0.0).within("evolve")? else {
            unreachable!("kernel in, kernel out")
        };
        let hat = lt.distance(&l_from_density(space, &kt, hb).within("lfun")?);
        props.push(Property::below("l_evolution_matches_kernel_evolution", hat, 1e-8));
        props.push(Property::below("rho_sum_vanishes", rho_sum_residual(&model, hb, s.keldysh.n)?, 1e-8));
        let qn = |x: f64| keldysh_basis(space, 0, x, Route::Algebraic).map(|b| operator_norm(&b.0)).within("green");
        props.push(Property::below("quantum_field_linear_in_hbar", (qn(hb)? / qn(hb / 2.0)? - 2.0).abs(), 1e-10));
    }
    let finite = zero_hbar_generator_is_finite(space, h).within("green")?;
    props.push(Property::holds("zero_hbar_generator_finite", 0.0, "all entries finite", finite));

    let mut out = CommandOutput::new(Command::Verify);
    out.table = Table::new(&["check", "value", "bound", "pass"]);
    let budget = ErrorBudget { truncation_tail: s.schedule(s.schedule.rates[0])?.tail_bound(1.0), integrator: s.integrator.rtol, cutoff_leakage: 0.0 };
    out.budget = budget;
    for p in &props {
        out.table.push(vec![p.name.clone(), num(p.value), p.bound.clone(), p.pass.to_string()], budget);
    }
    out.signature = props.iter().map(|p| p.value).collect();
    out.summary = vec![("failed".into(), props.iter().filter(|p| !p.pass).count() as f64)];
    out.report = json!({ "checks": props, "samples": SAMPLES, "flags": model.flags });
    out.properties = props;
    Ok(out)
}
