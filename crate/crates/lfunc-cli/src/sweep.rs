//! Runs one command over a list of values of `a`, `hbar` or `n_max` and merges the results in axis order.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::report::{emit, num, CommandOutput, ErrorBudget, Property, Table};
use crate::scenario::Scenario;
use crate::Command;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
pub enum Axis {
    #[value(name = "a")]
    A,
    #[value(name = "hbar", alias = "ħ")]
    Hbar,
    #[value(name = "n_max")]
    NMax,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::A => "a",
            Axis::Hbar => "hbar",
            Axis::NMax => "n_max",
        }
    }

    /// Copy of `s` with the axis set to `v`.
    pub fn apply(self, s: &Scenario, v: f64) -> Result<Scenario> {
        let mut s = s.clone();
        match self {
            Axis::A => s.schedule.rates = vec![v],
            Axis::Hbar => s.hbar = vec![v],
            Axis::NMax => {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(CliError::Usage(format!("n_max values must be positive integers, got {v}")));
                }
                s.n_max = v as usize;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

/// Values must be non-empty and strictly monotone.
pub fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    let up = values.windows(2).all(|w| w[1] > w[0]);
    let down = values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(CliError::Usage("sweep values must be strictly monotone".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub outputs: Vec<CommandOutput>,
    /// Max-norm distance between consecutive signatures (`NaN` when their lengths differ).
    pub distances: Vec<f64>,
    pub table: Table,
    pub passed: bool,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::NAN;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Runs the sub-runs concurrently, writes each into `<out>/<axis>=<value>/`, and writes the merged
/// `sweep.csv` in axis order. A failed sub-run aborts the sweep after the rows before it are written.
pub fn sweep(command: Command, s: &Scenario, axis: Axis, values: &[f64], out: &Path) -> Result<SweepResult> {
    check_values(values)?;
    let runs: Vec<(Result<CommandOutput>, f64)> = values
        .par_iter()
        .map(|&v| {
            let start = Instant::now();
            let r = axis.apply(s, v).and_then(|sv| {
                let o = command.execute(&sv)?;
                emit(&out.join(format!("{}={}", axis.name(), v)), &sv, &o, start.elapsed().as_secs_f64())?;
                Ok(o)
            });
            (r, v)
        })
        .collect();
    let mut outputs = Vec::new();
    let mut failure = None;
    for (r, v) in runs {
        match r {
            Ok(o) => outputs.push(o),
            Err(e) => {
                failure = Some(CliError::Sweep { axis: axis.name().into(), value: v, source: Box::new(e) });
                break;
            }
        }
    }
    let distances: Vec<f64> = outputs.windows(2).map(|w| distance(&w[0].signature, &w[1].signature)).collect();
    let mut cols: Vec<String> = vec![axis.name().into()];
    if let Some(first) = outputs.first() {
        cols.extend(first.summary.iter().map(|(k, _)| k.clone()));
    }
    cols.push("distance_prev".into());
    cols.push("passed".into());
    let colrefs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(&colrefs);
    for (i, o) in outputs.iter().enumerate() {
        let mut cells = vec![num(values[i])];
        cells.extend(o.summary.iter().map(|(_, x)| num(*x)));
        cells.push(if i > 0 { num(distances[i - 1]) } else { String::new() });
        cells.push(o.passed().to_string());
        table.push(cells, o.budget);
    }
    std::fs::create_dir_all(out)?;
    table.write(&out.join("sweep.csv"))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let passed = outputs.iter().all(CommandOutput::passed);
    Ok(SweepResult { axis, values: values.to_vec(), outputs, distances, table, passed })
}

/// Sweep-level properties: sub-run failures are reported by name.
pub fn failed_properties(r: &SweepResult) -> Vec<(f64, Property)> {
    r.values
        .iter()
        .zip(&r.outputs)
        .flat_map(|(&v, o)| o.properties.iter().filter(|p| !p.pass).map(move |p| (v, p.clone())))
        .collect()
}

pub fn merged_budget(r: &SweepResult) -> ErrorBudget {
    r.outputs.iter().fold(ErrorBudget::default(), |b, o| b.max(o.budget))
}
