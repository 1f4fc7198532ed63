//! How much of each compartment's mass sits near the selected clone(s).

use crate::grid::Grid;
use crate::model::{RateTable, State};

/// Values closer than this are treated as one plateau when locating maxima.
const PLATEAU_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMass {
    pub center: f64,
    pub half_width: f64,
    /// Fraction of the stage's total mass with `|x - center| <= half_width`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    /// 0-based stage.
    pub stage: usize,
    pub windows: Vec<WindowMass>,
    /// Clone index where the density is largest.
    pub argmax_density: f64,
    /// Clone indices of the stem-cell self-renewal maxima the windows are
    /// centred on.
    pub argmax_selfrenewal: Vec<f64>,
    /// Every grid value exceeds `support_threshold * max`.
    pub full_support: bool,
}

impl ConcentrationReport {
    pub fn total_fraction(&self) -> f64 {
        self.windows.iter().map(|w| w.fraction).sum()
    }
}

/// Mass fraction of `values` in `|x - center| <= half_width`.
pub fn window_fraction(values: &[f64], grid: &Grid, center: f64, half_width: f64) -> f64 {
    let total = grid.integrate(values);
    if total <= 0.0 {
        return 0.0;
    }
    let tol = 1e-9 * grid.cell_width();
    let mass: f64 = grid
        .points()
        .iter()
        .zip(grid.weights())
        .zip(values)
        .filter(|((x, _), _)| (**x - center).abs() <= half_width + tol)
        .map(|((_, w), v)| w * v)
        .sum();
    (mass / total).clamp(0.0, 1.0)
}

/// Largest window fraction over all windows centred on grid points.
pub fn peak_window_fraction(values: &[f64], grid: &Grid, half_width: f64) -> (f64, f64) {
    grid.points()
        .iter()
        .map(|&c| (c, window_fraction(values, grid, c, half_width)))
        .fold(
            (0.0, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        )
}

/// Whether every value exceeds `threshold * max`.
pub fn has_full_support(values: &[f64], threshold: f64) -> bool {
    let max = values.iter().copied().fold(0.0, f64::max);
    max > 0.0 && values.iter().all(|&v| v > threshold * max)
}

/// Clone positions of the global maxima of a table.
///
/// Local maxima (plateaus included) within `tolerance` of the global maximum
/// are returned; a plateau of adjacent points reports its midpoint, so a
/// maximum lying on a cell boundary comes back exactly.
pub fn table_maxima(table: &RateTable, grid: &Grid, tolerance: f64) -> Vec<f64> {
    let v = table.values();
    let x = grid.points();
    let global = table.sup();
    let mut out = Vec::new();
    let mut k = 0;
    while k < v.len() {
        let mut end = k;
        while end + 1 < v.len() && (v[end + 1] - v[k]).abs() <= PLATEAU_TOL {
            end += 1;
        }
        let left_ok = k == 0 || v[k - 1] < v[k] - PLATEAU_TOL;
        let right_ok = end + 1 == v.len() || v[end + 1] < v[end] - PLATEAU_TOL;
        if left_ok && right_ok && v[k] >= global - tolerance {
            out.push(0.5 * (x[k] + x[end]));
        }
        k = end + 1;
    }
    out
}

/// Concentration of one stage around the given centres (typically the
/// self-renewal maxima of the stem-cell compartment).
pub fn concentration_report(
    state: &State,
    stage: usize,
    grid: &Grid,
    centers: &[f64],
    half_width: f64,
    support_threshold: f64,
) -> ConcentrationReport {
    let values = state.stage(stage);
    let windows = centers
        .iter()
        .map(|&c| WindowMass {
            center: c,
            half_width,
            fraction: window_fraction(values, grid, c, half_width),
        })
        .collect();
    let (kmax, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
    ConcentrationReport {
        stage,
        windows,
        argmax_density: grid.points()[kmax],
        argmax_selfrenewal: centers.to_vec(),
        full_support: has_full_support(values, support_threshold),
    }
}
