//! Tables, reports and the run record written next to every command's outputs.

use std::fs;
use std::path::Path;

use lfunc_core::{Complex64, Matrix64};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::scenario::Scenario;
use crate::Command;

/// Error estimates attached to every emitted number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// Switching mass outside the integration window.
    pub truncation_tail: f64,
    /// Integrator error estimate (configured tolerance where no estimate is computed).
    pub integrator: f64,
    /// Norm of the state component on the Fock-space truncation edge.
    pub cutoff_leakage: f64,
}

impl ErrorBudget {
    pub fn max(self, o: Self) -> Self {
        Self {
            truncation_tail: self.truncation_tail.max(o.truncation_tail),
            integrator: self.integrator.max(o.integrator),
            cutoff_leakage: self.cutoff_leakage.max(o.cutoff_leakage),
        }
    }

    pub const HEADER: [&'static str; 3] = ["truncation_tail", "integrator", "cutoff_leakage"];

    pub fn cells(self) -> Vec<String> {
        vec![num(self.truncation_tail), num(self.integrator), num(self.cutoff_leakage)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Property {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

impl Property {
    pub fn below(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, bound: format!("< {tol:e}"), pass: value < tol }
    }

    pub fn holds(name: &str, value: f64, bound: &str, pass: bool) -> Self {
        Self { name: name.into(), value, bound: bound.into(), pass }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(cols: &[&str]) -> Self {
        let mut header: Vec<String> = cols.iter().map(|s| s.to_string()).collect();
        header.extend(ErrorBudget::HEADER.iter().map(|s| s.to_string()));
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, mut cells: Vec<String>, budget: ErrorBudget) {
        cells.extend(budget.cells());
        self.rows.push(cells);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn cjson(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn mjson(m: &Matrix64) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| cjson(m[(i, j)])).collect())).collect())
}

/// Everything one command produced, before it is written.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub command: Command,
    pub table: Table,
    pub report: Value,
    pub properties: Vec<Property>,
    pub budget: ErrorBudget,
    pub warnings: Vec<String>,
    /// Numbers compared between consecutive sweep points.
    pub signature: Vec<f64>,
    /// Named scalars copied into sweep tables.
    pub summary: Vec<(String, f64)>,
}

impl CommandOutput {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            table: Table::default(),
            report: Value::Null,
            properties: Vec::new(),
            budget: ErrorBudget::default(),
            warnings: Vec::new(),
            signature: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub command: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub error_budget: ErrorBudget,
    pub properties: Vec<Property>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            crate::error::EXIT_OK
        } else {
            crate::error::EXIT_PROPERTY
        }
    }
}

/// Writes `<command>.csv`, `<command>.json`, `run.json` and `timings.json` into `dir`.
pub fn emit(dir: &Path, scenario: &Scenario, out: &CommandOutput, seconds: f64) -> Result<RunResult> {
    fs::create_dir_all(dir)?;
    let name = out.command.name();
    let csv_name = format!("{name}.csv");
    let json_name = format!("{name}.json");
    out.table.write(&dir.join(&csv_name))?;
    let report = json!({
        "command": name,
        "scenario_hash": scenario.hash(),
        "seed": scenario.seed,
        "report": out.report,
        "error_budget": out.budget,
        "properties": out.properties,
        "warnings": out.warnings,
    });
    fs::write(dir.join(&json_name), serde_json::to_string_pretty(&report)? + "\n")?;
    let run = RunResult {
        command: name.into(),
        scenario: scenario.name.clone(),
        scenario_hash: scenario.hash(),
        seed: scenario.seed,
        outputs: vec![csv_name, json_name],
        error_budget: out.budget,
        properties: out.properties.clone(),
        warnings: out.warnings.clone(),
        passed: out.passed(),
    };
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&run)? + "\n")?;
    fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&json!({ "command": name, "seconds": seconds }))? + "\n")?;
    Ok(run)
}
