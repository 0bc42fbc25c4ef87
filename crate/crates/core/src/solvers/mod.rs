//! Ground-truth solvers and the initial-condition generator.

mod burgers;
mod ic;
mod ns;

pub use burgers::solve_burgers;
pub use ic::{generate_ic, IcGeneratorSpec, POSITIVITY_FLOOR};
pub use ns::solve_ns2d;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residual::{self, ResidualConfig};
use crate::types::{Candidate, Grid, LabeledSample, PdeParameters, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurgersScheme {
    /// Central conservative flux and diffusion, RK4.
    CentralRk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NsScheme {
    /// First-order Rusanov finite volumes, SSP-RK2.
    RusanovSsprk2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cfl: f64,
    pub max_internal_steps: usize,
    pub burgers_scheme: BurgersScheme,
    pub ns_scheme: NsScheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cfl: 0.4,
            max_internal_steps: 5_000_000,
            burgers_scheme: BurgersScheme::CentralRk4,
            ns_scheme: NsScheme::RusanovSsprk2,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::config("solver.cfl", format!("must lie in (0, 1), got {}", self.cfl)));
        }
        if self.max_internal_steps == 0 {
            return Err(Error::config("solver.max_internal_steps", "must be positive"));
        }
        Ok(())
    }
}

/// Runs the ground-truth solver matching the candidate's family.
pub fn solve(candidate: &Candidate, grid: &Grid, config: &SolverConfig) -> Result<Trajectory> {
    match candidate.pde {
        PdeParameters::Burgers { nu } => solve_burgers(&candidate.ic_field, nu, grid, config),
        PdeParameters::CompressibleNs { eta, zeta, gamma } => {
            solve_ns2d(&candidate.ic_field, eta, zeta, gamma, grid, config)
        }
    }
}

/// Labels a candidate: simulate, then cache the residual score of the truth.
pub fn simulate(candidate: &Candidate, grid: &Grid, config: &SolverConfig) -> Result<LabeledSample> {
    simulate_with(candidate, grid, config, &ResidualConfig::default())
}

pub fn simulate_with(
    candidate: &Candidate,
    grid: &Grid,
    config: &SolverConfig,
    residual_cfg: &ResidualConfig,
) -> Result<LabeledSample> {
    let truth = solve(candidate, grid, config)?;
    let truth_score = residual::trajectory_score(&truth, &candidate.pde, residual_cfg)?;
    LabeledSample::new(candidate.clone(), truth, truth_score)
}
