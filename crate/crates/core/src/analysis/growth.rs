//! Growth integrals `R_i(t, x) = ∫_0^t P_i(ρ_M(s), x) ds` and the windowed
//! sign checks built on them.

use crate::error::{Error, Result};
use crate::model::{growth_rate, ModelParams};
use crate::solver::Trajectory;

/// `R_i(t, x_k)` for the dividing stages, stage-major, dimensionless.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthIntegrals {
    num_points: usize,
    values: Vec<f64>,
    pub time: f64,
}

impl GrowthIntegrals {
    pub fn zeros(params: &ModelParams, time: f64) -> Self {
        Self {
            num_points: params.num_points(),
            values: vec![0.0; (params.num_stages() - 1) * params.num_points()],
            time,
        }
    }

    pub fn num_dividing_stages(&self) -> usize {
        self.values.len() / self.num_points
    }

    pub fn stage(&self, stage: usize) -> &[f64] {
        &self.values[stage * self.num_points..(stage + 1) * self.num_points]
    }

    /// `R_i += dt * P_i(s, x_k)`; `time` advances by `dt`.
    pub fn accumulate_at(&mut self, params: &ModelParams, signal: f64, dt: f64) {
        let n = self.num_points;
        for (i, r) in self.values.chunks_exact_mut(n).enumerate() {
            let a = params.self_renewal(i).values();
            let p = params.proliferation(i).values();
            for k in 0..n {
                r[k] += dt * growth_rate(a[k], p[k], signal);
            }
        }
        self.time += dt;
    }
}

/// Functional form of [`GrowthIntegrals::accumulate_at`].
pub fn accumulate_growth(integrals: &GrowthIntegrals, signal: f64, params: &ModelParams, dt: f64) -> GrowthIntegrals {
    let mut next = integrals.clone();
    next.accumulate_at(params, signal, dt);
    next
}

/// Average rate of change of `R_i` between two recorded integrals,
/// `(R_i(t1, x) - R_i(t0, x)) / (t1 - t0)`, per stage and grid point.
pub fn windowed_rates(start: &GrowthIntegrals, end: &GrowthIntegrals) -> Result<Vec<Vec<f64>>> {
    let span = end.time - start.time;
    if !(span > 0.0) {
        return Err(Error::Window(format!(
            "window [{}, {}] has non-positive length",
            start.time, end.time
        )));
    }
    if start.values.len() != end.values.len() {
        return Err(Error::Structural("growth integrals of different shapes".into()));
    }
    Ok((0..start.num_dividing_stages())
        .map(|i| {
            start
                .stage(i)
                .iter()
                .zip(end.stage(i))
                .map(|(a, b)| (b - a) / span)
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignThresholds {
    /// Bound on `|max_x` average increment of `R_1|`, per day.
    pub stem_tolerance: f64,
    /// Upper bound on `max_x` average increment of `R_i`, `i >= 2`, per day.
    pub progenitor_ceiling: f64,
}

impl Default for SignThresholds {
    fn default() -> Self {
        Self {
            stem_tolerance: 1e-3,
            progenitor_ceiling: -1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignReport {
    /// Window actually used (snapped to recorded times).
    pub window: (f64, f64),
    /// `max_x` of the average increment of `R_1`, per day. Expected near 0.
    pub stem_max_rate: f64,
    /// Grid index attaining `stem_max_rate`.
    pub stem_argmax: usize,
    /// `max_x` of the average increment of `R_i` for `i = 2..M-1`.
    pub progenitor_max_rates: Vec<f64>,
    /// Full per-stage rates, useful for reading off values at a given clone.
    pub rates: Vec<Vec<f64>>,
    pub stem_ok: bool,
    pub progenitors_ok: bool,
}

impl SignReport {
    pub fn passed(&self) -> bool {
        self.stem_ok && self.progenitors_ok
    }
}

/// Windowed-average form of the sign structure of the growth integrals:
/// over `[t0, t1]`, `max_x` of the mean rate of `R_1` should vanish and that
/// of every later dividing stage should be strictly negative.
///
/// The window is snapped inward to recorded snapshot times.
pub fn check_theorem_signs(
    trajectory: &Trajectory,
    window: (f64, f64),
    thresholds: &SignThresholds,
) -> Result<SignReport> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::Window(format!(
            "window [{t0}, {t1}] has zero or negative length"
        )));
    }
    let first = *trajectory.times.first().unwrap();
    let last = *trajectory.times.last().unwrap();
    let tol = 1e-9 * last.abs().max(1.0);
    if t0 < first - tol || t1 > last + tol {
        return Err(Error::Window(format!(
            "window [{t0}, {t1}] outside the trajectory [{first}, {last}]"
        )));
    }
    let j0 = trajectory.snapshot_at_or_after(t0).unwrap();
    let j1 = trajectory.snapshot_at_or_before(t1).unwrap();
    if j1 <= j0 {
        return Err(Error::Window(format!(
            "window [{t0}, {t1}] contains fewer than two recorded times"
        )));
    }
    let rates = windowed_rates(&trajectory.growth[j0], &trajectory.growth[j1])?;
    let (stem_argmax, stem_max_rate) = argmax(&rates[0]);
    let progenitor_max_rates: Vec<f64> = rates[1..].iter().map(|r| argmax(r).1).collect();
    Ok(SignReport {
        window: (trajectory.times[j0], trajectory.times[j1]),
        stem_max_rate,
        stem_argmax,
        stem_ok: stem_max_rate.abs() <= thresholds.stem_tolerance,
        progenitors_ok: progenitor_max_rates.iter().all(|&r| r <= thresholds.progenitor_ceiling),
        progenitor_max_rates,
        rates,
    })
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (k, v)| if v > best.1 { (k, v) } else { best },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::RateTable;
    use approx::assert_relative_eq;

    #[test]
    fn constant_signal_integrates_linearly() {
        let grid = Grid::midpoint(5).unwrap();
        let a1 = RateTable::sample(&grid, |x| 0.8 + 0.1 * x);
        let p1 = RateTable::sample(&grid, |x| 0.2 + 0.1 * x);
        let params = ModelParams::new(vec![a1.clone()], vec![p1.clone()], 1.0, 1.0).unwrap();
        let mut r = GrowthIntegrals::zeros(&params, 0.0);
        for _ in 0..1000 {
            r.accumulate_at(&params, 1.0, 0.01);
        }
        assert_relative_eq!(r.time, 10.0, max_relative = 1e-12);
        for k in 0..5 {
            let expect = 10.0 * (2.0 * a1.values()[k] - 1.0) * p1.values()[k];
            assert_relative_eq!(r.stage(0)[k], expect, max_relative = 1e-12);
        }
        let next = accumulate_growth(&r, 1.0, &params, 0.5);
        assert_relative_eq!(next.time, 10.5, max_relative = 1e-12);
    }

    #[test]
    fn zero_length_window_rejected() {
        let grid = Grid::midpoint(3).unwrap();
        let params = ModelParams::new(
            vec![RateTable::constant(&grid, 0.8)],
            vec![RateTable::constant(&grid, 0.2)],
            1.0,
            1.0,
        )
        .unwrap();
        let r = GrowthIntegrals::zeros(&params, 5.0);
        assert!(windowed_rates(&r, &r).is_err());
    }
}
