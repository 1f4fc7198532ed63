//! Post-processing of trajectories: growth integrals, concentration,
//! a-priori bounds, equilibria and oscillation detection.

pub mod bounds;
pub mod concentration;
pub mod growth;
pub mod oscillation;
pub mod steady;

pub use bounds::{bound_estimates, check_bounds, BoundEstimates, BoundKind, BoundViolation};
pub use concentration::{concentration_report, table_maxima, window_fraction, ConcentrationReport};
pub use growth::{accumulate_growth, check_theorem_signs, GrowthIntegrals, SignReport, SignThresholds};
pub use oscillation::{classify_series, detect_oscillations, OscillationClass, OscillationOptions, OscillationReport};
pub use steady::{steady_state_predictor, CloneRates, Equilibrium};
