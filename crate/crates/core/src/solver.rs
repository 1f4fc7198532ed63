//! Explicit time integration with recording and step-size guards.

use std::time::{Duration, Instant};

use log::warn;

use crate::analysis::GrowthIntegrals;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{rhs_into, signal_unchecked, validate_assumptions, DensityTotals, ModelParams, StageArray, State};

/// `dt * max_rate` above which a step is rejected.
pub const STABILITY_LIMIT: f64 = 0.5;
/// `dt * max_rate` above which a warning is logged.
pub const STABILITY_WARNING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    ForwardEuler,
    /// Classical Runge-Kutta, for convergence cross-checks only.
    Rk4,
}

impl Integrator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Integrator::ForwardEuler => "euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" | "forward-euler" => Ok(Integrator::ForwardEuler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(Error::InvalidConfig(format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Step size in days.
    pub dt: f64,
    /// Final time `T` in days.
    pub horizon: f64,
    /// Keep a full snapshot every this many steps.
    pub record_every: usize,
    /// Keep total densities every this many steps. Must divide `record_every`.
    pub totals_every: usize,
    pub integrator: Integrator,
    /// Negative values down to `-positivity_tolerance * scale` are clamped to
    /// zero; anything below aborts the run.
    pub positivity_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl SolverConfig {
    /// `dt = 1e-2`, `T = 1e4`, 2000 snapshots.
    pub fn desk_scale() -> Self {
        Self {
            dt: 1e-2,
            horizon: 1e4,
            record_every: 500,
            totals_every: 1,
            integrator: Integrator::ForwardEuler,
            positivity_tolerance: 1e-12,
        }
    }

    /// `dt = 1e-4`, `T = 1e4` (10^8 steps). Totals are kept every 100 steps
    /// so the series stays at the desk-scale resolution.
    pub fn paper_fidelity() -> Self {
        Self {
            dt: 1e-4,
            horizon: 1e4,
            record_every: 50_000,
            totals_every: 100,
            integrator: Integrator::ForwardEuler,
            positivity_tolerance: 1e-12,
        }
    }

    /// Same step size, different horizon; `record_every` chosen for about
    /// 2000 snapshots.
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self.retarget_snapshots(2000);
        self
    }

    /// Pick `record_every` so roughly `count` snapshots span the run.
    pub fn retarget_snapshots(&mut self, count: usize) {
        let steps = self.num_steps().max(1);
        let raw = (steps / count.max(1)).max(1);
        let every = self.totals_every.max(1);
        self.record_every = raw.div_ceil(every) * every;
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.record_every == 0 || self.totals_every == 0 {
            return Err(Error::InvalidConfig(
                "record_every and totals_every must be >= 1".into(),
            ));
        }
        if !self.record_every.is_multiple_of(self.totals_every) {
            return Err(Error::InvalidConfig(format!(
                "record_every ({}) must be a multiple of totals_every ({})",
                self.record_every, self.totals_every
            )));
        }
        if !(self.positivity_tolerance >= 0.0 && self.positivity_tolerance.is_finite()) {
            return Err(Error::InvalidConfig("positivity_tolerance must be >= 0".into()));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened to land on the horizon.
    pub fn num_steps(&self) -> usize {
        let raw = self.horizon / self.dt;
        let n = raw.round();
        if (raw - n).abs() <= 1e-9 * raw.max(1.0) {
            n as usize
        } else {
            raw.ceil() as usize
        }
    }

    /// Time after `k` steps.
    #[inline]
    pub fn time_at(&self, k: usize, num_steps: usize) -> f64 {
        if k >= num_steps {
            self.horizon
        } else {
            k as f64 * self.dt
        }
    }
}

/// Total densities and signal at full (or `totals_every`) resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalsSeries {
    num_stages: usize,
    times: Vec<f64>,
    rho: Vec<f64>,
    signal: Vec<f64>,
}

impl TotalsSeries {
    pub fn new(num_stages: usize) -> Self {
        Self {
            num_stages,
            times: Vec::new(),
            rho: Vec::new(),
            signal: Vec::new(),
        }
    }

    pub fn with_capacity(num_stages: usize, len: usize) -> Self {
        Self {
            num_stages,
            times: Vec::with_capacity(len),
            rho: Vec::with_capacity(len * num_stages),
            signal: Vec::with_capacity(len),
        }
    }

    pub fn push(&mut self, time: f64, rho: &[f64], signal: f64) {
        debug_assert_eq!(rho.len(), self.num_stages);
        self.times.push(time);
        self.rho.extend_from_slice(rho);
        self.signal.push(signal);
    }

    pub fn num_stages(&self) -> usize {
        self.num_stages
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn signals(&self) -> &[f64] {
        &self.signal
    }

    pub fn rho(&self, j: usize) -> &[f64] {
        &self.rho[j * self.num_stages..(j + 1) * self.num_stages]
    }

    pub fn at(&self, j: usize) -> DensityTotals {
        DensityTotals {
            totals: self.rho(j).to_vec(),
            signal: self.signal[j],
        }
    }

    /// `ρ_i(t)` for one stage across the series.
    pub fn stage_series(&self, stage: usize) -> Vec<f64> {
        self.rho.chunks_exact(self.num_stages).map(|r| r[stage]).collect()
    }

    pub fn last(&self) -> Option<DensityTotals> {
        self.len().checked_sub(1).map(|j| self.at(j))
    }

    /// Index of the first entry with time `>= t` (within rounding).
    pub fn index_at_or_after(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let j = self.times.partition_point(|&s| s < t - tol);
        (j < self.len()).then_some(j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub config: SolverConfig,
    pub steps: usize,
    /// Negative round-off values clamped to zero.
    pub clamped: usize,
    /// Largest `dt * max_rate` over the run (per-step value when the
    /// s-independent bound failed, otherwise the bound itself).
    pub stability_product: f64,
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<State>,
    /// Growth integrals `R_i` at each recorded time.
    pub growth: Vec<GrowthIntegrals>,
    pub totals: TotalsSeries,
    pub meta: RunMeta,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.snapshots
            .last()
            .expect("trajectory always holds the initial state")
    }

    pub fn final_growth(&self) -> &GrowthIntegrals {
        self.growth
            .last()
            .expect("trajectory always holds the initial integrals")
    }

    /// Index of the first snapshot with time `>= t` (within rounding).
    pub fn snapshot_at_or_after(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let j = self.times.partition_point(|&s| s < t - tol);
        (j < self.times.len()).then_some(j)
    }

    /// Index of the last snapshot with time `<= t` (within rounding).
    pub fn snapshot_at_or_before(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.partition_point(|&s| s <= t + tol).checked_sub(1)
    }
}

/// Scratch buffers for one integration.
struct Stepper {
    deriv: StageArray,
    rk: Option<RkBuffers>,
}

struct RkBuffers {
    k: [StageArray; 4],
    tmp: StageArray,
}

impl Stepper {
    fn new(num_stages: usize, num_points: usize, integrator: Integrator) -> Self {
        let rk = (integrator == Integrator::Rk4).then(|| RkBuffers {
            k: std::array::from_fn(|_| StageArray::zeros(num_stages, num_points)),
            tmp: StageArray::zeros(num_stages, num_points),
        });
        Self {
            deriv: StageArray::zeros(num_stages, num_points),
            rk,
        }
    }

    /// Advance `n` in place by `h` given the signal at `n`. Returns clamps.
    fn step(
        &mut self,
        n: &mut StageArray,
        params: &ModelParams,
        grid: &Grid,
        signal: f64,
        h: f64,
        tolerance: f64,
    ) -> Result<usize> {
        match &mut self.rk {
            None => {
                rhs_into(n, params, signal, &mut self.deriv);
                let deriv = &self.deriv;
                apply_update(n, |idx, v| v + h * deriv.as_slice()[idx], tolerance)
            }
            Some(rk) => {
                let m = params.num_stages();
                let k_fac = params.feedback_strength();
                let stage_signal = |x: &StageArray| signal_unchecked(grid.integrate(x.stage(m - 1)).max(0.0), k_fac);
                rhs_into(n, params, signal, &mut rk.k[0]);
                for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
                    let (done, rest) = rk.k.split_at_mut(stage);
                    let prev = &done[stage - 1];
                    for ((t, &v), &kv) in rk.tmp.as_mut_slice().iter_mut().zip(n.as_slice()).zip(prev.as_slice()) {
                        *t = v + frac * h * kv;
                    }
                    let s = stage_signal(&rk.tmp);
                    rhs_into(&rk.tmp, params, s, &mut rest[0]);
                }
                let [k1, k2, k3, k4] = &rk.k;
                apply_update(
                    n,
                    |idx, v| {
                        v + h / 6.0
                            * (k1.as_slice()[idx]
                                + 2.0 * k2.as_slice()[idx]
                                + 2.0 * k3.as_slice()[idx]
                                + k4.as_slice()[idx])
                    },
                    tolerance,
                )
            }
        }
    }
}

/// Write `update(idx, old)` into every entry and enforce the positivity policy
/// stage by stage.
pub(crate) fn apply_update(n: &mut StageArray, update: impl Fn(usize, f64) -> f64, tolerance: f64) -> Result<usize> {
    let mut min = f64::INFINITY;
    for (idx, v) in n.as_mut_slice().iter_mut().enumerate() {
        *v = update(idx, *v);
        min = min.min(*v);
    }
    if min >= 0.0 {
        return Ok(0);
    }
    if min.is_nan() {
        return Err(Error::Domain("non-finite density produced".into()));
    }
    let mut clamped = 0;
    for stage in 0..n.num_stages() {
        let values = n.stage_mut(stage);
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = -tolerance * scale;
        for (index, v) in values.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v >= floor {
                    *v = 0.0;
                    clamped += 1;
                } else {
                    return Err(Error::Positivity {
                        stage,
                        index,
                        value: *v,
                        floor,
                    });
                }
            }
        }
    }
    Ok(clamped)
}

pub(crate) fn check_guard(dt: f64, max_rate: f64) -> Result<f64> {
    let product = dt * max_rate;
    if product > STABILITY_LIMIT {
        return Err(Error::StabilityGuard { dt, max_rate, product });
    }
    Ok(product)
}

/// One forward Euler step with the default positivity tolerance.
pub fn euler_step(state: &State, params: &ModelParams, grid: &Grid, dt: f64) -> Result<State> {
    euler_step_counted(state, params, grid, dt, SolverConfig::desk_scale().positivity_tolerance).map(|(s, _)| s)
}

/// One forward Euler step; also returns the number of clamped values.
pub fn euler_step_counted(
    state: &State,
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
    positivity_tolerance: f64,
) -> Result<(State, usize)> {
    state.check_shape(params, grid)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let rho_m = grid.integrate(state.stage(params.num_stages() - 1));
    let signal = crate::model::feedback_signal(rho_m, params.feedback_strength())?;
    let product = check_guard(dt, params.max_rate(signal))?;
    if product > STABILITY_WARNING {
        warn!("dt * max_rate = {product:.3} exceeds {STABILITY_WARNING}");
    }
    let mut next = state.clone();
    let mut stepper = Stepper::new(params.num_stages(), grid.num_points(), Integrator::ForwardEuler);
    let clamped = stepper.step(next.densities_mut(), params, grid, signal, dt, positivity_tolerance)?;
    next.set_time(state.time() + dt);
    Ok((next, clamped))
}

/// Integrate from `initial` over `[t0, t0 + horizon]`.
///
/// Identical inputs give bit-identical trajectories. Snapshots are kept every
/// `record_every` steps and at the final time; totals every `totals_every`
/// steps and at the final time. Growth integrals accumulate with the
/// left-endpoint rule at every step.
pub fn simulate(initial: &State, params: &ModelParams, grid: &Grid, config: &SolverConfig) -> Result<Trajectory> {
    let started = Instant::now();
    config.validate()?;
    initial.check_shape(params, grid)?;
    validate_assumptions(params, grid)?.into_result()?;

    let m = params.num_stages();
    let steps = config.num_steps();
    let t0 = initial.time();
    let k_fac = params.feedback_strength();

    // When the s-independent bound passes, no step can trip the guard.
    let bound_product = config.dt * params.max_rate_bound();
    let per_step_guard = bound_product > STABILITY_LIMIT;
    let mut stability_product = if per_step_guard { 0.0 } else { bound_product };

    let mut n = initial.densities().clone();
    let mut stepper = Stepper::new(m, grid.num_points(), config.integrator);
    let mut growth = GrowthIntegrals::zeros(params, t0);
    let mut rho = vec![0.0; m];

    let snapshots_len = steps / config.record_every + 2;
    let mut times = Vec::with_capacity(snapshots_len);
    let mut snapshots = Vec::with_capacity(snapshots_len);
    let mut growth_snaps = Vec::with_capacity(snapshots_len);
    let mut totals = TotalsSeries::with_capacity(m, steps / config.totals_every + 2);
    let mut clamped = 0;
    let mut warned = false;

    let mut t = t0;
    for k in 0..steps {
        t = t0 + config.time_at(k, steps);
        let h = config.time_at(k + 1, steps) - config.time_at(k, steps);
        for (i, r) in rho.iter_mut().enumerate() {
            *r = grid.integrate(n.stage(i));
        }
        let signal = signal_unchecked(rho[m - 1], k_fac);

        if k % config.totals_every == 0 {
            totals.push(t, &rho, signal);
        }
        if k % config.record_every == 0 {
            times.push(t);
            snapshots.push(State::from_array(t, n.clone())?);
            let mut g = growth.clone();
            g.time = t;
            growth_snaps.push(g);
        }

        let product = if per_step_guard {
            let p = check_guard(h, params.max_rate(signal)).map_err(|e| Error::Step {
                time: t,
                source: Box::new(e),
            })?;
            stability_product = stability_product.max(p);
            p
        } else {
            bound_product
        };
        if product > STABILITY_WARNING && !warned {
            warn!("dt * max_rate = {product:.3} exceeds {STABILITY_WARNING} at t = {t}");
            warned = true;
        }

        growth.accumulate_at(params, signal, h);
        clamped += stepper
            .step(&mut n, params, grid, signal, h, config.positivity_tolerance)
            .map_err(|e| Error::Step {
                time: t,
                source: Box::new(e),
            })?;
    }

    let t_end = if steps == 0 { t } else { t0 + config.horizon };
    for (i, r) in rho.iter_mut().enumerate() {
        *r = grid.integrate(n.stage(i));
    }
    totals.push(t_end, &rho, signal_unchecked(rho[m - 1], k_fac));
    growth.time = t_end;
    times.push(t_end);
    snapshots.push(State::from_array(t_end, n)?);
    growth_snaps.push(growth);

    Ok(Trajectory {
        times,
        snapshots,
        growth: growth_snaps,
        totals,
        meta: RunMeta {
            config: config.clone(),
            steps,
            clamped,
            stability_product,
            wall_clock: started.elapsed(),
        },
    })
}
