use std::path::Path;
use std::process::{Command as Process, ExitCode};

use lfunc_cli::commands::{check_table, rho_sum_residual};
use lfunc_cli::report::{CommandOutput, Property};
use lfunc_cli::scenario::{parse_scenario, Scenario, AQC, S1, S1_QUARTIC, S2, S3};
use lfunc_cli::Command;

struct Line {
    pass: bool,
    text: String,
}

fn load(text: &str) -> Scenario {
    parse_scenario(text).expect("bundled scenario parses")
}

fn run(command: Command, s: &Scenario) -> CommandOutput {
    command.execute(s).unwrap_or_else(|e| panic!("{} on {}: {e}", command.name(), s.name))
}

fn prop<'a>(out: &'a CommandOutput, name: &str) -> &'a Property {
    out.properties
        .iter()
        .find(|p| p.name == name)
        .unwrap_or_else(|| panic!("{} reports no `{name}`", out.command.name()))
}

fn summary(out: &CommandOutput, key: &str) -> f64 {
    out.summary.iter().find(|(k, _)| k == key).map(|x| x.1).unwrap_or(f64::NAN)
}

fn describe(props: &[&Property]) -> (bool, String) {
    let pass = props.iter().all(|p| p.pass);
    let text = props.iter().map(|p| format!("{} = {:e} ({})", p.name, p.value, p.bound)).collect::<Vec<_>>().join("; ");
    (pass, text)
}

fn with_hbars(text: &str, hbar: &[f64]) -> Scenario {
    let mut s = load(text);
    s.hbar = hbar.to_vec();
    s
}

fn max_over(outs: &[CommandOutput], name: &str) -> Property {
    let ps: Vec<&Property> = outs.iter().map(|o| prop(o, name)).collect();
    let worst = ps.iter().map(|p| p.value).fold(0.0, f64::max);
    Property { name: name.into(), value: worst, bound: ps[0].bound.clone(), pass: ps.iter().all(|p| p.pass) }
}

fn line(n: usize, title: &str, (pass, detail): (bool, String)) -> Line {
    let tag = if pass { "PASS" } else { "FAIL" };
    Line { pass, text: format!("{tag} [{n:2}] {title}: {detail}") }
}

fn verify_twice(dir: &Path) -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_lfunc");
    let scenario = dir.join("s2.json");
    std::fs::write(&scenario, S2).expect("write scenario");
    let mut reports = Vec::new();
    for i in 0..2 {
        let out = dir.join(format!("run{i}"));
        let status = Process::new(bin)
            .args(["verify", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&out)
            .status()
            .expect("spawn lfunc");
        let files: Vec<Vec<u8>> = ["verify.json", "verify.csv", "run.json"]
            .iter()
            .map(|f| std::fs::read(out.join(f)).unwrap_or_default())
            .collect();
        reports.push((status.code(), files));
    }
    let same = reports[0].1 == reports[1].1 && reports[0].1.iter().all(|f| !f.is_empty());
    let ok = reports.iter().all(|r| r.0 == Some(0));
    (same && ok, format!("exit codes {:?}/{:?}, reports bit-identical = {same}", reports[0].0, reports[1].0))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let hbars = [1.0, 0.5, 0.25];
    let verified: Vec<CommandOutput> = [S1, S2, S3].iter().map(|t| run(Command::Verify, &with_hbars(t, &hbars))).collect();

    let mut s2_hat = load(S2);
    s2_hat.schedule.rates = vec![0.1];
    s2_hat.integrator.rtol = 1e-10;
    let hat = run(Command::Verify, &s2_hat);

    let dress = run(Command::Dress, &load(S2));
    let table = check_table(0.5, 1.0, 1.0, &load(S1).keldysh.times).expect("keldysh table");
    let s1 = load(S1);
    let s2 = load(S2);
    let rho = [
        rho_sum_residual(&s1.model().expect("s1 model"), 1.0, 0.5).expect("rho sum s1"),
        rho_sum_residual(&s2.model().expect("s2 model"), 1.0, 0.5).expect("rho sum s2"),
    ];
    let smatrix = run(Command::Smatrix, &load(S3));
    let inclusive = run(Command::InclusiveSmatrix, &load(S3));
    let mut quartic = load(S1_QUARTIC);
    quartic.classical.hbars = vec![1.0, 0.5, 0.25, 0.125];
    quartic.classical.ratio_band = (1.6, 2.4);
    let classical = run(Command::ClassicalLimit, &quartic);
    let aqc = run(Command::Aqc, &load(AQC));

    let mut lines = Vec::new();
    lines.push(line(1, "CCR on cutoff-safe subspace, S1-S3, hbar in {1, 0.5, 0.25}", describe(&[&max_over(&verified, "ccr_on_cutoff_safe_subspace")])));
    lines.push(line(2, "L <-> K round trip, 20 states per scenario", describe(&[&max_over(&verified, "l_kernel_round_trip")])));
    lines.push(line(
        3,
        "doubled-algebra identities, 20 kernels",
        describe(&[
            &max_over(&verified, "doubled_operators_are_multiplication_images"),
            &max_over(&verified, "doubled_ccr"),
            &max_over(&verified, "doubled_actions_commute"),
            &max_over(&verified, "doubled_hbar_differences"),
        ]),
    ));
    lines.push(line(4, "L evolution vs kernel evolution, S2, a = 0.1, rtol 1e-10", describe(&[prop(&hat, "l_evolution_matches_kernel_evolution")])));

    let fidelity = summary(&dress, "fidelity");
    let fid = Property { name: "fidelity_at_a_0.05".into(), value: fidelity, bound: ">= 0.99".into(), pass: fidelity >= 0.99 };
    lines.push(line(
        5,
        "adiabatic dressing, S2, a in {0.2, 0.1, 0.05}",
        describe(&[prop(&dress, "fidelity_error_decreasing"), &fid, prop(&dress, "phase_mismatch_decreasing")]),
    ));
    lines.push(line(
        6,
        "L-dressing, S2",
        describe(&[prop(&dress, "stationarity_residual_decreasing"), prop(&dress, "dressed_l_is_a_state")]),
    ));

    let t_ok = table.max_err < 1e-8 && table.zero_max < 1e-10 && table.zero_count == 8 && table.printed_count == 4 && table.swap_residual < 1e-8;
    lines.push(line(
        7,
        "Keldysh table, S1, n = 0.5",
        (
            t_ok,
            format!(
                "max deviation from table = {:e} (< 1e-8); {} printed entries; off-table: {} vanish (max {:e}, < 1e-10), {} are time-ordering argument swaps [{}] of printed entries (residual {:e})",
                table.max_err,
                table.printed_count,
                table.zero_count,
                table.zero_max,
                table.swapped.len(),
                table.swapped.iter().map(|(x, y)| format!("({}, {})", x.notation(), y.notation())).collect::<Vec<_>>().join(", "),
                table.swap_residual
            ),
        ),
    ));

    let rho_max = rho.iter().copied().fold(0.0, f64::max);
    lines.push(line(8, "rho-sum vanishing, 2- and 3-point, S1 and S2", (rho_max < 1e-8, format!("residual = {rho_max:e} (< 1e-8)"))));
    lines.push(line(
        9,
        "renormalized S, S3",
        describe(&[
            prop(&smatrix, "cauchy_decreasing"),
            prop(&smatrix, "dressed_vacuum_element_is_one"),
            prop(&smatrix, "one_particle_phase_decreasing"),
            prop(&smatrix, "element_form_matches_operator_form"),
        ]),
    ));
    lines.push(line(
        10,
        "inclusive S, S3",
        describe(&[
            prop(&inclusive, "one_particle_residual_decreasing"),
            prop(&inclusive, "vacuum_invariant_at_smallest_a"),
            prop(&inclusive, "kernel_sandwich_at_smallest_a"),
            prop(&inclusive, "outputs_are_states"),
        ]),
    ));
    lines.push(line(
        11,
        "phase dual route, S3",
        describe(&[prop(&smatrix, "route_discrepancy_decreasing"), prop(&smatrix, "dressings_n_equivalent_at_smallest_a")]),
    ));
    lines.push(line(
        12,
        "hbar -> 0, S1 quartic, hbar in {1, 0.5, 0.25, 0.125}",
        describe(&[prop(&classical, "distance_is_linear_in_hbar"), prop(&classical, "zero_hbar_is_division_free")]),
    ));
    lines.push(line(
        13,
        "quantum field scaling",
        describe(&[prop(&classical, "quantum_field_linear_in_hbar"), &max_over(&verified, "quantum_field_linear_in_hbar")]),
    ));
    lines.push(line(
        14,
        "AQC, 2 qubits, 10 seeded instances",
        describe(&[prop(&aqc, "success_at_slowest_schedule"), prop(&aqc, "success_non_decreasing")]),
    ));
    lines.push(line(15, "determinism of verify", verify_twice(tmp.path())));

    for l in &lines {
        println!("{}", l.text);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
