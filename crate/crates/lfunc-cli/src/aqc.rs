//! Seeded random diagonal cost instances for the adiabatic optimization runs.

use lfunc_core::dressing::{aqc_driver, diagonal_problem, eigen_track, uniform_grid, Family, Start, TrackOptions};
use lfunc_core::fock::FockSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, InModule, Result};
use crate::scenario::AqcSpec;

const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    pub costs: Vec<f64>,
    pub minimizer: usize,
    /// Smallest gap along `(1 - s) driver + s diag(costs)`.
    pub gap: f64,
}

/// Draws instances with a unique minimum and an interpolation gap of at least `spec.min_gap`.
pub fn draw_instances(space: &FockSpace<f64>, spec: &AqcSpec, seed: u64, hbar: f64) -> Result<Vec<Instance>> {
    if space.mode_count() != spec.qubits || space.n_max() != 1 {
        return Err(CliError::Scenario(format!("at `aqc`: need {} modes with n_max = 1 for the qubit encoding", spec.qubits)));
    }
    let driver = aqc_driver(space, hbar).within("dressing")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..MAX_DRAWS {
        if out.len() == spec.instances {
            return Ok(out);
        }
        let costs: Vec<f64> = (0..space.dim()).map(|_| spec.cost_scale * rng.gen::<f64>()).collect();
        let mut sorted = costs.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted[1] - sorted[0] < spec.min_separation {
            continue;
        }
        let family = Family::interpolating(driver.clone(), diagonal_problem(&costs)).within("dressing")?;
        let all: Vec<usize> = (0..space.dim()).collect();
        let gap = match eigen_track(&family, &all, &Start::Lowest, &uniform_grid(200), TrackOptions::default()) {
            Ok(t) => t.min_gap(),
            Err(_) => continue,
        };
        if gap < spec.min_gap {
            continue;
        }
        let minimizer = (0..costs.len()).min_by(|&a, &b| costs[a].total_cmp(&costs[b])).unwrap_or(0);
        out.push(Instance { costs, minimizer, gap });
    }
    if out.len() == spec.instances {
        Ok(out)
    } else {
        Err(CliError::Scenario(format!("at `aqc`: only {} of {} instances met the gap screen after {MAX_DRAWS} draws", out.len(), spec.instances)))
    }
}
