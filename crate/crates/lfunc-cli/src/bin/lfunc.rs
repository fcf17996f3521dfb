use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lfunc_cli::error::{CliError, EXIT_OK, EXIT_PROPERTY, EXIT_USAGE};
use lfunc_cli::scenario::parse_scenario;
use lfunc_cli::sweep::{failed_properties, sweep, Axis};
use lfunc_cli::{run, Command};

/// L-functional toolkit: dressing, Green functions and scattering on truncated Fock spaces.
#[derive(Debug, Parser)]
#[command(name = "lfunc", version)]
struct Args {
    command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Sweep axis.
    #[arg(long, value_enum, requires = "values")]
    axis: Option<Axis>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',', requires = "axis")]
    values: Option<Vec<f64>>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("LFUNC_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Usage(format!("LFUNC_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(CliError::Usage("LFUNC_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main_inner() -> Result<i32, CliError> {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return Ok(code);
        }
    };
    threads()?;
    let text = std::fs::read_to_string(&args.scenario)?;
    let mut scenario = parse_scenario(&text)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    match (args.axis, args.values) {
        (Some(axis), Some(values)) => {
            let r = sweep(args.command, &scenario, axis, &values, &args.out)?;
            for (v, o) in r.values.iter().zip(&r.outputs) {
                for w in &o.warnings {
                    eprintln!("warning at {} = {v}: {w}", axis.name());
                }
            }
            for (v, p) in failed_properties(&r) {
                eprintln!("property failed at {} = {v}: {} = {:e} ({})", axis.name(), p.name, p.value, p.bound);
            }
            Ok(if r.passed { EXIT_OK } else { EXIT_PROPERTY })
        }
        _ => {
            let r = run(args.command, &scenario, &args.out)?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            for p in r.properties.iter().filter(|p| !p.pass) {
                eprintln!("property failed: {} = {:e} ({})", p.name, p.value, p.bound);
            }
            Ok(r.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let code = main_inner().unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
