//! Searchable multistep samplers for diffusion and rectified-flow ODEs.
//!
//! A [`SolverSchedule`] pairs step sizes with a lower-triangular coefficient
//! matrix over cached model outputs. The [`search`] module fits both by
//! differentiating through the unrolled sampler; [`registry`] stores schedules
//! and ships the published ones; [`solvers`] holds the samplers and the
//! classical baselines they are compared against.

pub mod ad;
pub mod bound;
pub mod error;
pub mod fields;
pub mod registry;
pub mod rng;
pub mod schedules;
pub mod search;
pub mod solvers;

pub use error::{Error, Result};
pub use fields::{Trajectory, VelocityField};
pub use schedules::{NoiseSchedule, Scheduler, SchedulerKind};
pub use solvers::{OrderCap, SolverSchedule};
