//! Structured model of clonal selection across maturation compartments.
//!
//! Densities `n_i(t, x)` of cells at stage `i` and clone index `x ∈ [0, 1]`
//! evolve under a feedback signal driven by the mature compartment. The crate
//! discretises the clone axis, integrates in time with forward Euler and
//! provides the analyses used to check the long-time behaviour.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod error;
pub mod grid;
pub mod model;
pub mod ode;
pub mod solver;

pub use calibration::{build_preset, build_preset_unaligned, ModelSpec, Preset, PresetName, RateFunction};
pub use error::{Error, Result};
pub use grid::{Grid, GridKind};
pub use model::{
    density_totals, differentiation_outflux, feedback_signal, net_growth, rhs, total_density, validate_assumptions,
    ModelParams, RateTable, StageArray, State, ValidationReport,
};
pub use ode::{ide_to_ode, ode_rhs, ode_simulate, OdeParams, OdeState, OdeTrajectory};
pub use solver::{euler_step, simulate, Integrator, SolverConfig, TotalsSeries, Trajectory};
