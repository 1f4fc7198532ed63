//! Domain types and the right-hand side of the structured population model.
//!
//! Stage indices are 0-based throughout the API: stage `0` holds stem cells,
//! stages `1..M-2` progenitors and stage `M-1` mature cells and blasts.
//! Reports and error messages print them 1-based.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// A scalar function of the clone index sampled once on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    values: Vec<f64>,
}

impl RateTable {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn sample(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.points().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            values: vec![value; grid.num_points()],
        }
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Rate tables and scalars of an `M`-stage model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    self_renewal: Vec<RateTable>,
    proliferation: Vec<RateTable>,
    feedback_strength: f64,
    clearance: f64,
    epsilon: f64,
}

impl ModelParams {
    /// `self_renewal` and `proliferation` hold one table per dividing stage
    /// (`M - 1` each). `feedback_strength` is `K` in kg/cell, `clearance` is
    /// `d` in 1/day.
    pub fn new(
        self_renewal: Vec<RateTable>,
        proliferation: Vec<RateTable>,
        feedback_strength: f64,
        clearance: f64,
    ) -> Result<Self> {
        if self_renewal.is_empty() {
            return Err(Error::Structural(
                "at least one dividing stage is required (M >= 2)".into(),
            ));
        }
        if self_renewal.len() != proliferation.len() {
            return Err(Error::Structural(format!(
                "{} self-renewal tables but {} proliferation tables",
                self_renewal.len(),
                proliferation.len()
            )));
        }
        let n = self_renewal[0].len();
        if n == 0 {
            return Err(Error::Structural("rate tables are empty".into()));
        }
        for (i, t) in self_renewal.iter().chain(&proliferation).enumerate() {
            if t.len() != n {
                return Err(Error::Structural(format!(
                    "rate table {i} has {} samples, expected {n}",
                    t.len()
                )));
            }
        }
        positive("feedback strength K", feedback_strength)?;
        positive("clearance d", clearance)?;
        Ok(Self {
            self_renewal,
            proliferation,
            feedback_strength,
            clearance,
            epsilon: 1.0,
        })
    }

    /// Time scale `ε`; the right-hand side is divided by it.
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        positive("epsilon", epsilon)?;
        self.epsilon = epsilon;
        Ok(self)
    }

    /// Number of maturation stages `M`.
    pub fn num_stages(&self) -> usize {
        self.self_renewal.len() + 1
    }

    pub fn num_points(&self) -> usize {
        self.self_renewal[0].len()
    }

    pub fn self_renewal(&self, stage: usize) -> &RateTable {
        &self.self_renewal[stage]
    }

    pub fn proliferation(&self, stage: usize) -> &RateTable {
        &self.proliferation[stage]
    }

    pub fn self_renewal_tables(&self) -> &[RateTable] {
        &self.self_renewal
    }

    pub fn proliferation_tables(&self) -> &[RateTable] {
        &self.proliferation
    }

    pub fn feedback_strength(&self) -> f64 {
        self.feedback_strength
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.num_points() != grid.num_points() {
            return Err(Error::Structural(format!(
                "rate tables have {} samples but the grid has {} points",
                self.num_points(),
                grid.num_points()
            )));
        }
        Ok(())
    }

    /// Largest of `|P_i|`, `Q_i` and `d` over all stages and grid points at
    /// signal `s`, divided by `ε`.
    pub fn max_rate(&self, signal: f64) -> f64 {
        let mut max = self.clearance;
        for (a, p) in self.self_renewal.iter().zip(&self.proliferation) {
            for (&a, &p) in a.values().iter().zip(p.values()) {
                max = max.max(growth_rate(a, p, signal).abs());
                max = max.max(outflux_rate(a, p, signal));
            }
        }
        max / self.epsilon
    }

    /// Bound on [`ModelParams::max_rate`] valid for every `s` in `(0, 1]`
    /// when all self-renewal values lie in `(0, 1)`: `|P| <= p`, `Q <= 2p`.
    pub fn max_rate_bound(&self) -> f64 {
        let p_max = self.proliferation.iter().map(RateTable::sup).fold(0.0, f64::max);
        (2.0 * p_max).max(self.clearance) / self.epsilon
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

/// `M` per-stage arrays sampled on a grid, stored stage-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StageArray {
    num_points: usize,
    data: Vec<f64>,
}

impl StageArray {
    pub fn zeros(num_stages: usize, num_points: usize) -> Self {
        Self {
            num_points,
            data: vec![0.0; num_stages * num_points],
        }
    }

    pub fn from_stages(stages: Vec<Vec<f64>>) -> Result<Self> {
        let num_points = stages.first().map(Vec::len).unwrap_or(0);
        if stages.is_empty() || num_points == 0 {
            return Err(Error::Structural("no stages or empty stage arrays".into()));
        }
        let mut data = Vec::with_capacity(stages.len() * num_points);
        for (i, s) in stages.iter().enumerate() {
            if s.len() != num_points {
                return Err(Error::Structural(format!(
                    "stage {} has {} samples, expected {num_points}",
                    i + 1,
                    s.len()
                )));
            }
            data.extend_from_slice(s);
        }
        Ok(Self { num_points, data })
    }

    pub fn num_stages(&self) -> usize {
        self.data.len() / self.num_points
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    #[inline]
    pub fn stage(&self, stage: usize) -> &[f64] {
        &self.data[stage * self.num_points..(stage + 1) * self.num_points]
    }

    #[inline]
    pub fn stage_mut(&mut self, stage: usize) -> &mut [f64] {
        &mut self.data[stage * self.num_points..(stage + 1) * self.num_points]
    }

    pub fn stages(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_points)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.stages().map(<[f64]>::to_vec).collect()
    }
}

/// Time derivative of a [`State`]; entries may be negative.
pub type Derivative = StageArray;

/// Population densities `n_i(t, x_k)` in cells/kg per unit `x` at time `t` (days).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    time: f64,
    densities: StageArray,
}

impl State {
    /// Validating constructor: every value must be finite and non-negative.
    pub fn new(time: f64, densities: Vec<Vec<f64>>) -> Result<Self> {
        let densities = StageArray::from_stages(densities)?;
        Self::from_array(time, densities)
    }

    pub fn from_array(time: f64, densities: StageArray) -> Result<Self> {
        for (i, stage) in densities.stages().enumerate() {
            if let Some((k, &v)) = stage.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Domain(format!(
                    "density of stage {} at grid index {k} is {v}; densities must be finite and non-negative",
                    i + 1
                )));
            }
        }
        Ok(Self { time, densities })
    }

    pub fn zeros(num_stages: usize, num_points: usize, time: f64) -> Self {
        Self {
            time,
            densities: StageArray::zeros(num_stages, num_points),
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn num_stages(&self) -> usize {
        self.densities.num_stages()
    }

    pub fn num_points(&self) -> usize {
        self.densities.num_points()
    }

    #[inline]
    pub fn stage(&self, stage: usize) -> &[f64] {
        self.densities.stage(stage)
    }

    pub fn densities(&self) -> &StageArray {
        &self.densities
    }

    pub(crate) fn densities_mut(&mut self) -> &mut StageArray {
        &mut self.densities
    }

    pub fn max_norm(&self) -> f64 {
        self.densities.max_norm()
    }

    pub fn check_shape(&self, params: &ModelParams, grid: &Grid) -> Result<()> {
        params.check_grid(grid)?;
        if self.num_stages() != params.num_stages() || self.num_points() != grid.num_points() {
            return Err(Error::Structural(format!(
                "state is {}x{} but the model is {}x{}",
                self.num_stages(),
                self.num_points(),
                params.num_stages(),
                grid.num_points()
            )));
        }
        Ok(())
    }
}

/// Total densities `ρ_i` and the feedback signal at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTotals {
    pub totals: Vec<f64>,
    pub signal: f64,
}

/// `s = 1 / (1 + K ρ_M)`.
pub fn feedback_signal(rho_mature: f64, feedback_strength: f64) -> Result<f64> {
    if !(rho_mature >= 0.0) || !rho_mature.is_finite() {
        return Err(Error::Domain(format!(
            "mature-cell density must be finite and non-negative, got {rho_mature}"
        )));
    }
    positive("feedback strength K", feedback_strength)?;
    Ok(signal_unchecked(rho_mature, feedback_strength))
}

#[inline]
pub(crate) fn signal_unchecked(rho_mature: f64, feedback_strength: f64) -> f64 {
    1.0 / (1.0 + feedback_strength * rho_mature)
}

/// `P = (2 a s - 1) p`.
#[inline]
pub(crate) fn growth_rate(a: f64, p: f64, s: f64) -> f64 {
    (2.0 * a * s - 1.0) * p
}

/// `Q = 2 (1 - a s) p`.
#[inline]
pub(crate) fn outflux_rate(a: f64, p: f64, s: f64) -> f64 {
    2.0 * (1.0 - a * s) * p
}

fn dividing_stage(stage: usize, params: &ModelParams) -> Result<()> {
    if stage + 1 >= params.num_stages() {
        return Err(Error::NoRateForStage {
            stage,
            num_stages: params.num_stages(),
        });
    }
    Ok(())
}

/// Net growth rate `P_i(x_k)` of dividing stage `stage` at signal `s`, 1/day.
pub fn net_growth(stage: usize, k: usize, signal: f64, params: &ModelParams) -> Result<f64> {
    dividing_stage(stage, params)?;
    let a = params.self_renewal(stage).values()[k];
    let p = params.proliferation(stage).values()[k];
    Ok(growth_rate(a, p, signal))
}

/// Per-capita flux `Q_i(x_k)` from stage `stage` into the next one, 1/day.
pub fn differentiation_outflux(stage: usize, k: usize, signal: f64, params: &ModelParams) -> Result<f64> {
    dividing_stage(stage, params)?;
    let a = params.self_renewal(stage).values()[k];
    let p = params.proliferation(stage).values()[k];
    Ok(outflux_rate(a, p, signal))
}

/// `ρ_i = ∫ n_i dx` by the grid's quadrature rule.
pub fn total_density(state: &State, stage: usize, grid: &Grid) -> Result<f64> {
    if state.num_points() != grid.num_points() {
        return Err(Error::Structural("state and grid sizes differ".into()));
    }
    if stage >= state.num_stages() {
        return Err(Error::Structural(format!(
            "stage {} out of range for a {}-stage state",
            stage + 1,
            state.num_stages()
        )));
    }
    Ok(grid.integrate(state.stage(stage)))
}

pub fn density_totals(state: &State, params: &ModelParams, grid: &Grid) -> Result<DensityTotals> {
    state.check_shape(params, grid)?;
    let totals: Vec<f64> = state.densities().stages().map(|s| grid.integrate(s)).collect();
    let signal = feedback_signal(*totals.last().unwrap(), params.feedback_strength())?;
    Ok(DensityTotals { totals, signal })
}

/// Time derivative of the densities. The signal is computed once from `ρ_M`
/// of the input state.
pub fn rhs(state: &State, params: &ModelParams, grid: &Grid) -> Result<Derivative> {
    state.check_shape(params, grid)?;
    let rho_m = grid.integrate(state.stage(params.num_stages() - 1));
    let signal = feedback_signal(rho_m, params.feedback_strength())?;
    let mut out = StageArray::zeros(params.num_stages(), grid.num_points());
    rhs_into(state.densities(), params, signal, &mut out);
    Ok(out)
}

/// Right-hand-side kernel at a given signal. Shapes are not checked.
pub(crate) fn rhs_into(n: &StageArray, params: &ModelParams, signal: f64, out: &mut StageArray) {
    let m = params.num_stages();
    let d = params.clearance();
    let inv_eps = 1.0 / params.epsilon();

    out.stage_mut(0).fill(0.0);
    for i in 0..m - 1 {
        let a = params.self_renewal(i).values();
        let p = params.proliferation(i).values();
        let src = n.stage(i);
        let (head, tail) = out.as_mut_slice().split_at_mut((i + 1) * n.num_points());
        let here = &mut head[i * n.num_points()..];
        let next = &mut tail[..n.num_points()];
        for k in 0..src.len() {
            here[k] += growth_rate(a[k], p[k], signal) * src[k];
            next[k] = outflux_rate(a[k], p[k], signal) * src[k];
        }
    }
    let last = n.stage(m - 1);
    for (o, &v) in out.stage_mut(m - 1).iter_mut().zip(last) {
        *o -= d * v;
    }
    if inv_eps != 1.0 {
        out.as_mut_slice().iter_mut().for_each(|v| *v *= inv_eps);
    }
}

/// Which modelling assumption a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Self-renewal fractions in the open interval `(1/2, 1)`.
    SelfRenewalRange,
    /// Proliferation rates in the open interval `(0, 1)` per day.
    ProliferationRange,
    /// Progenitor self-renewal strictly below stem-cell self-renewal.
    StemCellDominance,
    /// Stem cells divide no faster than the first progenitor stage
    /// (calibration-specific, reported as a warning).
    ProliferationOrdering,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assumption::SelfRenewalRange => "self-renewal in (1/2, 1)",
            Assumption::ProliferationRange => "proliferation in (0, 1)",
            Assumption::StemCellDominance => "a_i < a_1",
            Assumption::ProliferationOrdering => "p_1 <= p_2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub assumption: Assumption,
    /// 0-based stage of the offending table.
    pub stage: usize,
    pub index: usize,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: stage {} grid index {} value {}",
            self.assumption,
            self.stage + 1,
            self.index,
            self.value
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<ValidationReport> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(Error::Assumptions(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Check the pointwise assumptions on the rate tables.
///
/// Open-interval bounds are strict: a value equal to a bound is a violation.
pub fn validate_assumptions(params: &ModelParams, grid: &Grid) -> Result<ValidationReport> {
    params.check_grid(grid)?;
    let mut report = ValidationReport::default();
    let a1 = params.self_renewal(0).values();

    for (i, (a, p)) in params
        .self_renewal_tables()
        .iter()
        .zip(params.proliferation_tables())
        .enumerate()
    {
        for (k, (&a, &p)) in a.values().iter().zip(p.values()).enumerate() {
            if !(a > 0.5 && a < 1.0) {
                report.violations.push(Violation {
                    assumption: Assumption::SelfRenewalRange,
                    stage: i,
                    index: k,
                    value: a,
                });
            }
            if !(p > 0.0 && p < 1.0) {
                report.violations.push(Violation {
                    assumption: Assumption::ProliferationRange,
                    stage: i,
                    index: k,
                    value: p,
                });
            }
            if i > 0 && !(a < a1[k]) {
                report.violations.push(Violation {
                    assumption: Assumption::StemCellDominance,
                    stage: i,
                    index: k,
                    value: a,
                });
            }
        }
    }

    if params.num_stages() >= 3 {
        let p1 = params.proliferation(0).values();
        let p2 = params.proliferation(1).values();
        for (k, (&lo, &hi)) in p1.iter().zip(p2).enumerate() {
            if lo > hi {
                report.warnings.push(Violation {
                    assumption: Assumption::ProliferationOrdering,
                    stage: 0,
                    index: k,
                    value: lo,
                });
            }
        }
    }
    Ok(report)
}
