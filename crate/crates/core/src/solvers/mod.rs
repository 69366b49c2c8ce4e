//! Samplers: Euler, Heun, Adams–Bashforth, DPM-Solver++(2M), and the searched
//! multistep solvers for rectified flow and VP.

mod rf;
mod schedule;
mod vp;

pub use rf::{
    adams_bashforth_sample, adams_weights, euler_sample, heun_sample, multistep_rf_sample,
    uniform_grid,
};
pub use schedule::{OrderCap, SolverSchedule};
pub use vp::{dpm_solver_pp_2m_sample, exponential_euler_sample, multistep_vp_sample};

pub(crate) use rf::rollout_rf;
pub(crate) use schedule::{derive_from_raw, Derived};
pub(crate) use vp::rollout_vp;

use std::fmt;

use crate::error::{Error, Result};
use crate::fields::{Trajectory, VelocityField};
use crate::schedules::{Scheduler, SchedulerKind};

/// Baseline solver families that run on a uniform grid at a given NFE budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Baseline {
    /// Euler for rectified flow, first-order exponential integrator for VP.
    Euler,
    Heun,
    AdamsBashforth(usize),
    DpmSolverPp2m,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::Euler => f.write_str("euler"),
            Baseline::Heun => f.write_str("heun"),
            Baseline::AdamsBashforth(k) => write!(f, "ab{k}"),
            Baseline::DpmSolverPp2m => f.write_str("dpm2m"),
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Baseline::Euler),
            "heun" => Ok(Baseline::Heun),
            "dpm2m" | "dpm++2m" => Ok(Baseline::DpmSolverPp2m),
            _ => match s.strip_prefix("ab").and_then(|k| k.parse::<usize>().ok()) {
                Some(k) if (1..=4).contains(&k) => Ok(Baseline::AdamsBashforth(k)),
                _ => Err(Error::invalid("solver", format!("unknown solver {s:?}"))),
            },
        }
    }
}

impl Baseline {
    pub fn supports(&self, kind: SchedulerKind) -> bool {
        match self {
            Baseline::Euler => true,
            Baseline::Heun | Baseline::AdamsBashforth(_) => kind == SchedulerKind::RectifiedFlow,
            Baseline::DpmSolverPp2m => kind == SchedulerKind::VpLinear,
        }
    }

    /// Steps taken for an NFE budget; Heun spends two evaluations per step.
    pub fn steps_for_nfe(&self, nfe: usize) -> usize {
        match self {
            Baseline::Heun => (nfe / 2).max(1),
            _ => nfe,
        }
    }

    pub fn sample(
        &self,
        field: &VelocityField,
        scheduler: &Scheduler,
        x0: &[f64],
        nfe: usize,
    ) -> Result<Trajectory> {
        if !self.supports(scheduler.kind()) {
            return Err(Error::invalid(
                "solver",
                format!("{self} does not run under the {} scheduler", scheduler.kind()),
            ));
        }
        let grid = uniform_grid(self.steps_for_nfe(nfe));
        match (self, scheduler) {
            (Baseline::Euler, Scheduler::RectifiedFlow) => euler_sample(field, x0, &grid),
            (Baseline::Euler, Scheduler::Vp { .. }) => exponential_euler_sample(field, x0, &grid, scheduler),
            (Baseline::Heun, _) => heun_sample(field, x0, &grid),
            (Baseline::AdamsBashforth(k), _) => adams_bashforth_sample(field, x0, &grid, *k),
            (Baseline::DpmSolverPp2m, _) => dpm_solver_pp_2m_sample(field, x0, &grid, scheduler),
        }
    }
}

/// Run a searched or loaded schedule with the sampler matching its kind.
pub fn sample_schedule(
    field: &VelocityField,
    scheduler: &Scheduler,
    x0: &[f64],
    schedule: &SolverSchedule,
) -> Result<Trajectory> {
    match scheduler {
        Scheduler::RectifiedFlow => multistep_rf_sample(field, x0, schedule),
        Scheduler::Vp { .. } => multistep_vp_sample(field, x0, schedule, scheduler),
    }
}
