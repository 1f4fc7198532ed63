//! Multi-clone compartmental ODE system.
//!
//! Clone `j` has counts `N_i^j` in each of `M` stages; all clones share the
//! feedback `s = 1/(1 + K Z_M)` with `Z_M = Σ_j N_M^j`. On a midpoint grid,
//! treating every cell as a clone reproduces the discretised structured model
//! term by term, which makes this module an independent oracle for it.

use std::time::Instant;

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, Grid, GridKind};
use crate::model::{growth_rate, outflux_rate, ModelParams, StageArray, State};
use crate::solver::{apply_update, check_guard, Integrator, RunMeta, SolverConfig, TotalsSeries, STABILITY_WARNING};

/// Rates per stage and clone. Clone 0 is conventionally the healthy one; the
/// dynamics do not distinguish it.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeParams {
    /// `a_i^j`, indexed `[stage][clone]`, one row per dividing stage.
    self_renewal: Vec<Vec<f64>>,
    /// `p_i^j`, same layout, 1/day.
    proliferation: Vec<Vec<f64>>,
    feedback_strength: f64,
    clearance: f64,
}

impl OdeParams {
    pub fn new(
        self_renewal: Vec<Vec<f64>>,
        proliferation: Vec<Vec<f64>>,
        feedback_strength: f64,
        clearance: f64,
    ) -> Result<Self> {
        if self_renewal.is_empty() || self_renewal.len() != proliferation.len() {
            return Err(Error::Structural(
                "need matching self-renewal and proliferation rows, one per dividing stage".into(),
            ));
        }
        let clones = self_renewal[0].len();
        if clones == 0 {
            return Err(Error::Structural("at least one clone is required".into()));
        }
        if self_renewal.iter().chain(&proliferation).any(|row| row.len() != clones) {
            return Err(Error::Structural("every rate row needs one entry per clone".into()));
        }
        for (name, v) in [("feedback strength K", feedback_strength), ("clearance d", clearance)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self {
            self_renewal,
            proliferation,
            feedback_strength,
            clearance,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.self_renewal.len() + 1
    }

    pub fn num_clones(&self) -> usize {
        self.self_renewal[0].len()
    }

    pub fn self_renewal(&self, stage: usize) -> &[f64] {
        &self.self_renewal[stage]
    }

    pub fn proliferation(&self, stage: usize) -> &[f64] {
        &self.proliferation[stage]
    }

    pub fn feedback_strength(&self) -> f64 {
        self.feedback_strength
    }

    pub fn clearance(&self) -> f64 {
        self.clearance
    }

    /// Per-clone ranges: `a_i^j` in `(1/2, 1)`, `p_i^j` in `(0, 1)` and
    /// `a_i^j < a_1^j` for later stages. Reports the first offender.
    pub fn validate(&self) -> Result<()> {
        for (i, (a_row, p_row)) in self.self_renewal.iter().zip(&self.proliferation).enumerate() {
            for (j, (&a, &p)) in a_row.iter().zip(p_row).enumerate() {
                let bad = if !(a > 0.5 && a < 1.0) {
                    Some(format!("a = {a} outside (1/2, 1)"))
                } else if !(p > 0.0 && p < 1.0) {
                    Some(format!("p = {p} outside (0, 1)"))
                } else if i > 0 && !(a < self.self_renewal[0][j]) {
                    Some(format!(
                        "a = {a} not below the stem-cell value {}",
                        self.self_renewal[0][j]
                    ))
                } else {
                    None
                };
                if let Some(msg) = bad {
                    return Err(Error::Domain(format!("stage {}, clone {j}: {msg}", i + 1)));
                }
            }
        }
        Ok(())
    }

    /// Largest of `|P_i^j|`, `Q_i^j` and `d` at signal `s`.
    pub fn max_rate(&self, signal: f64) -> f64 {
        let mut max = self.clearance;
        for (a_row, p_row) in self.self_renewal.iter().zip(&self.proliferation) {
            for (&a, &p) in a_row.iter().zip(p_row) {
                max = max.max(growth_rate(a, p, signal).abs()).max(outflux_rate(a, p, signal));
            }
        }
        max
    }

    fn max_rate_bound(&self) -> f64 {
        let p_max = self.proliferation.iter().flatten().copied().fold(0.0, f64::max);
        (2.0 * p_max).max(self.clearance)
    }
}

/// Counts `N_i^j` (cells/kg), stored stage-major with clones along the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    time: f64,
    counts: StageArray,
}

impl OdeState {
    /// `counts[i][j]` is stage `i`, clone `j`.
    pub fn new(time: f64, counts: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_array(time, StageArray::from_stages(counts)?)
    }

    pub fn from_array(time: f64, counts: StageArray) -> Result<Self> {
        if let Some(v) = counts.as_slice().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "counts must be finite and non-negative, got {v}"
            )));
        }
        Ok(Self { time, counts })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counts(&self) -> &StageArray {
        &self.counts
    }

    pub fn stage(&self, stage: usize) -> &[f64] {
        self.counts.stage(stage)
    }

    /// `Z_i = Σ_j N_i^j`, pairwise in ascending clone order.
    pub fn stage_total(&self, stage: usize) -> f64 {
        pairwise_sum(self.counts.stage(stage))
    }

    fn check(&self, params: &OdeParams) -> Result<()> {
        if self.counts.num_stages() != params.num_stages() || self.counts.num_points() != params.num_clones() {
            return Err(Error::Structural(format!(
                "state is {}x{} but parameters describe {} stages and {} clones",
                self.counts.num_stages(),
                self.counts.num_points(),
                params.num_stages(),
                params.num_clones()
            )));
        }
        Ok(())
    }
}

/// Time derivative of every count.
pub fn ode_rhs(state: &OdeState, params: &OdeParams) -> Result<StageArray> {
    state.check(params)?;
    let m = params.num_stages();
    let signal = 1.0 / (1.0 + params.feedback_strength * state.stage_total(m - 1));
    let mut out = StageArray::zeros(m, params.num_clones());
    rhs_kernel(&state.counts, params, signal, &mut out);
    Ok(out)
}

fn rhs_kernel(n: &StageArray, params: &OdeParams, signal: f64, out: &mut StageArray) {
    let m = params.num_stages();
    let d = params.clearance;
    let mut inflow = vec![0.0; params.num_clones()];
    for i in 0..m - 1 {
        let a = &params.self_renewal[i];
        let p = &params.proliferation[i];
        let src = n.stage(i);
        let dst = out.stage_mut(i);
        let mut next_inflow = vec![0.0; src.len()];
        for j in 0..src.len() {
            dst[j] = inflow[j] + growth_rate(a[j], p[j], signal) * src[j];
            next_inflow[j] = outflux_rate(a[j], p[j], signal) * src[j];
        }
        inflow = next_inflow;
    }
    let last = n.stage(m - 1);
    for (j, o) in out.stage_mut(m - 1).iter_mut().enumerate() {
        *o = inflow[j] - d * last[j];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<OdeState>,
    /// Stage totals `Z_i` and the signal.
    pub totals: TotalsSeries,
    pub meta: RunMeta,
}

impl OdeTrajectory {
    pub fn final_state(&self) -> &OdeState {
        self.snapshots
            .last()
            .expect("trajectory always holds the initial state")
    }
}

/// Forward Euler integration with the same recording, guard and positivity
/// rules as [`crate::solver::simulate`].
pub fn ode_simulate(initial: &OdeState, params: &OdeParams, config: &SolverConfig) -> Result<OdeTrajectory> {
    let started = Instant::now();
    config.validate()?;
    if config.integrator != Integrator::ForwardEuler {
        return Err(Error::InvalidConfig(
            "the ODE reference integrates with forward Euler only".into(),
        ));
    }
    initial.check(params)?;
    params.validate()?;

    let m = params.num_stages();
    let steps = config.num_steps();
    let t0 = initial.time;
    let bound_product = config.dt * params.max_rate_bound();
    let per_step_guard = bound_product > crate::solver::STABILITY_LIMIT;
    let mut stability_product = if per_step_guard { 0.0 } else { bound_product };

    let mut n = initial.counts.clone();
    let mut deriv = StageArray::zeros(m, params.num_clones());
    let mut z = vec![0.0; m];
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    let mut totals = TotalsSeries::with_capacity(m, steps / config.totals_every + 2);
    let mut clamped = 0;
    let mut warned = false;

    let mut t = t0;
    for k in 0..steps {
        t = t0 + config.time_at(k, steps);
        let h = config.time_at(k + 1, steps) - config.time_at(k, steps);
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = pairwise_sum(n.stage(i));
        }
        let signal = 1.0 / (1.0 + params.feedback_strength * z[m - 1]);
        if k % config.totals_every == 0 {
            totals.push(t, &z, signal);
        }
        if k % config.record_every == 0 {
            times.push(t);
            snapshots.push(OdeState {
                time: t,
                counts: n.clone(),
            });
        }
        let wrap = |e: Error| Error::Step {
            time: t,
            source: Box::new(e),
        };
        let product = if per_step_guard {
            let p = check_guard(h, params.max_rate(signal)).map_err(wrap)?;
            stability_product = stability_product.max(p);
            p
        } else {
            bound_product
        };
        if product > STABILITY_WARNING && !warned {
            warn!("dt * max_rate = {product:.3} exceeds {STABILITY_WARNING} at t = {t}");
            warned = true;
        }
        rhs_kernel(&n, params, signal, &mut deriv);
        let dv = deriv.as_slice();
        clamped += apply_update(&mut n, |idx, v| v + h * dv[idx], config.positivity_tolerance).map_err(wrap)?;
    }

    let t_end = if steps == 0 { t } else { t0 + config.horizon };
    for (i, zi) in z.iter_mut().enumerate() {
        *zi = pairwise_sum(n.stage(i));
    }
    totals.push(t_end, &z, 1.0 / (1.0 + params.feedback_strength * z[m - 1]));
    times.push(t_end);
    snapshots.push(OdeState { time: t_end, counts: n });

    Ok(OdeTrajectory {
        times,
        snapshots,
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

/// Treat every cell of a midpoint grid as one clone: `a_i^k = a_i(x_k)`,
/// `p_i^k = p_i(x_k)`, `N_i^k = n_i(x_k) Δx`.
pub fn ide_to_ode(state: &State, params: &ModelParams, grid: &Grid) -> Result<(OdeState, OdeParams)> {
    if grid.kind() != GridKind::Midpoint {
        return Err(Error::NotMidpointGrid);
    }
    state.check_shape(params, grid)?;
    if params.epsilon() != 1.0 {
        return Err(Error::Domain("the ODE bridge requires epsilon = 1".into()));
    }
    let w = grid.weights();
    let counts = state
        .densities()
        .stages()
        .map(|s| s.iter().zip(w).map(|(v, w)| w * v).collect())
        .collect();
    let ode_params = OdeParams::new(
        params
            .self_renewal_tables()
            .iter()
            .map(|t| t.values().to_vec())
            .collect(),
        params
            .proliferation_tables()
            .iter()
            .map(|t| t.values().to_vec())
            .collect(),
        params.feedback_strength(),
        params.clearance(),
    )?;
    Ok((OdeState::new(state.time(), counts)?, ode_params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{steady_state_predictor, CloneRates};
    use crate::model::{total_density, RateTable};
    use approx::assert_relative_eq;

    const K: f64 = 1.75e-9;

    /// Single-clone values of the first calibration at x = 0.6.
    fn cal1_at_peak() -> (f64, f64, f64, f64) {
        let a1 = 0.8865;
        let a2 = 0.5 * (-(0.2f64 * 0.2) / 8.82).exp() + 0.349;
        (a1, a2, 0.1 + 0.2 * 0.6, 0.4 + 0.5 * 0.6)
    }

    fn single_clone() -> OdeParams {
        let (a1, a2, p1, p2) = cal1_at_peak();
        OdeParams::new(vec![vec![a1], vec![a2]], vec![vec![p1], vec![p2]], K, 2.0).unwrap()
    }

    #[test]
    fn zero_counts_have_zero_derivative() {
        let params = single_clone();
        let s = OdeState::new(0.0, vec![vec![0.0]; 3]).unwrap();
        assert!(ode_rhs(&s, &params).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_is_stationary() {
        let (a1, a2, p1, p2) = cal1_at_peak();
        let eq = steady_state_predictor(
            &CloneRates {
                self_renewal: vec![a1, a2],
                proliferation: vec![p1, p2],
            },
            K,
            2.0,
        )
        .unwrap();
        let s = OdeState::new(0.0, eq.rho.iter().map(|&r| vec![r]).collect()).unwrap();
        let d = ode_rhs(&s, &single_clone()).unwrap();
        let scale = eq.rho.iter().copied().fold(0.0, f64::max);
        assert!(d.max_norm() <= 1e-9 * scale, "{:?}", d.as_slice());
    }

    #[test]
    fn exchange_symmetry() {
        let (a1, a2, p1, p2) = cal1_at_peak();
        let params = OdeParams::new(
            vec![vec![a1, a1], vec![a2, a2]],
            vec![vec![p1, p1], vec![p2, p2]],
            K,
            2.0,
        )
        .unwrap();
        let s = OdeState::new(0.0, vec![vec![1e7, 1e7], vec![2e9, 2e9], vec![3e8, 3e8]]).unwrap();
        let d = ode_rhs(&s, &params).unwrap();
        for i in 0..3 {
            assert_eq!(d.stage(i)[0], d.stage(i)[1]);
        }
    }

    #[test]
    fn single_step_records_two_times() {
        let params = single_clone();
        let s = OdeState::new(0.0, vec![vec![1e7], vec![1e9], vec![1e8]]).unwrap();
        let config = SolverConfig {
            horizon: 1e-2,
            record_every: 1,
            ..SolverConfig::desk_scale()
        };
        let traj = ode_simulate(&s, &params, &config).unwrap();
        assert_eq!(traj.times.len(), 2);
        assert_relative_eq!(traj.times[1], 1e-2);
    }

    #[test]
    fn converges_to_equilibrium() {
        let (a1, ..) = cal1_at_peak();
        let params = single_clone();
        let s = OdeState::new(0.0, vec![vec![2.5e7], vec![3.8e9], vec![1e8]]).unwrap();
        let traj = ode_simulate(&s, &params, &SolverConfig::desk_scale()).unwrap();
        let z3 = traj.final_state().stage_total(2);
        assert_relative_eq!(z3, (2.0 * a1 - 1.0) / K, max_relative = 0.02);
    }

    #[test]
    fn fitter_clone_takes_over() {
        let (a1, a2, p1, p2) = cal1_at_peak();
        let params = OdeParams::new(
            vec![vec![a1, a1 - 0.01], vec![a2, a2]],
            vec![vec![p1, p1], vec![p2, p2]],
            K,
            2.0,
        )
        .unwrap();
        let s = OdeState::new(0.0, vec![vec![1e7, 1e7], vec![1e9, 1e9], vec![5e7, 5e7]]).unwrap();
        let config = SolverConfig::desk_scale().with_horizon(3000.0);
        let traj = ode_simulate(&s, &params, &config).unwrap();
        let n1 = traj.final_state().stage(0);
        let share = n1[1] / (n1[0] + n1[1]);
        assert!(share < 1e-3, "share of the weaker clone {share}");
    }

    #[test]
    fn bridge_preserves_totals() {
        let grid = Grid::midpoint(40).unwrap();
        let params = ModelParams::new(
            vec![RateTable::constant(&grid, 0.8), RateTable::constant(&grid, 0.7)],
            vec![RateTable::constant(&grid, 0.2), RateTable::constant(&grid, 0.5)],
            K,
            2.0,
        )
        .unwrap();
        let state = State::new(
            0.0,
            (0..3)
                .map(|i| {
                    grid.points()
                        .iter()
                        .map(|x| (1.0 + i as f64) * 1e8 * (-x * x / 0.2).exp())
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let (ode_state, ode_params) = ide_to_ode(&state, &params, &grid).unwrap();
        assert_eq!(ode_params.num_clones(), 40);
        for i in 0..3 {
            assert_eq!(ode_state.stage_total(i), total_density(&state, i, &grid).unwrap());
        }
        let vgrid = Grid::vertex(40).unwrap();
        assert!(matches!(
            ide_to_ode(&state, &params, &vgrid),
            Err(Error::NotMidpointGrid)
        ));
    }

    #[test]
    fn single_cell_bridge() {
        let grid = Grid::midpoint(1).unwrap();
        let params = ModelParams::new(
            vec![RateTable::constant(&grid, 0.8)],
            vec![RateTable::constant(&grid, 0.2)],
            K,
            2.0,
        )
        .unwrap();
        let state = State::new(0.0, vec![vec![3.0], vec![4.0]]).unwrap();
        let (s, _) = ide_to_ode(&state, &params, &grid).unwrap();
        assert_eq!(s.stage(0), &[3.0]);
        assert_eq!(s.stage(1), &[4.0]);
    }
}
