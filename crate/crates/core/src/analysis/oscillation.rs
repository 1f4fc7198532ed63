//! Classification of total-density series as converged, damped or
//! sustained oscillations.

use crate::error::{Error, Result};
use crate::solver::TotalsSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillationOptions {
    /// Minimum rise and fall around a peak, relative to the window mean.
    pub prominence_floor: f64,
    /// Minimum `(max - min) / mean` for anything but convergence.
    pub amplitude_floor: f64,
    pub min_peaks: usize,
    /// Late cycles whose mean swing falls below this fraction of the early
    /// cycles' swing count as damped.
    pub decay_ratio: f64,
}

impl Default for OscillationOptions {
    fn default() -> Self {
        Self {
            prominence_floor: 0.01,
            amplitude_floor: 0.05,
            min_peaks: 5,
            decay_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OscillationClass {
    Converged,
    Damped,
    Sustained,
}

impl OscillationClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            OscillationClass::Converged => "converged",
            OscillationClass::Damped => "damped",
            OscillationClass::Sustained => "sustained",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesOscillation {
    pub class: OscillationClass,
    pub peak_times: Vec<f64>,
    /// Mean spacing between consecutive peaks, days.
    pub mean_period: Option<f64>,
    /// Coefficient of variation of the peak spacing.
    pub period_cv: Option<f64>,
    /// `(max - min) / mean` over the window.
    pub relative_amplitude: f64,
    /// Late-to-early ratio of the mean peak-to-trough swing.
    pub swing_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    pub window: (f64, f64),
    /// One entry per compartment.
    pub compartments: Vec<SeriesOscillation>,
}

/// Classify every compartment of `totals` over `window`.
pub fn detect_oscillations(
    totals: &TotalsSeries,
    window: (f64, f64),
    options: &OscillationOptions,
) -> Result<OscillationReport> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::Window(format!(
            "window [{t0}, {t1}] has zero or negative length"
        )));
    }
    let j0 = totals
        .index_at_or_after(t0)
        .ok_or_else(|| Error::Window(format!("window start {t0} after the end of the series")))?;
    let tol = 1e-9 * t1.abs().max(1.0);
    let j1 = totals.times().partition_point(|&s| s <= t1 + tol);
    if j1 <= j0 {
        return Err(Error::Window(format!("window [{t0}, {t1}] holds no samples")));
    }
    let times = &totals.times()[j0..j1];
    let compartments = (0..totals.num_stages())
        .map(|i| {
            let series = totals.stage_series(i);
            classify_series(times, &series[j0..j1], options)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OscillationReport {
        window: (times[0], *times.last().unwrap()),
        compartments,
    })
}

/// Classify one uniformly sampled series.
///
/// The window must span at least 200 samples (ten times the shortest
/// resolvable period of 20 samples).
pub fn classify_series(times: &[f64], values: &[f64], options: &OscillationOptions) -> Result<SeriesOscillation> {
    if times.len() != values.len() {
        return Err(Error::Structural("times and values differ in length".into()));
    }
    if times.len() < 2 {
        return Err(Error::Window("window holds fewer than two samples".into()));
    }
    let dt = times[1] - times[0];
    let span = times[times.len() - 1] - times[0];
    if span < 200.0 * dt * (1.0 - 1e-9) {
        return Err(Error::Window(format!(
            "window of {span} days is shorter than 200 samples of {dt}"
        )));
    }

    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let relative_amplitude = if mean.abs() > 0.0 {
        (max - min) / mean.abs()
    } else {
        0.0
    };

    let extrema = zigzag(values, options.prominence_floor * mean.abs());
    let peak_times: Vec<f64> = extrema.iter().map(|e| times[e.peak]).collect();

    let (mean_period, period_cv) = if peak_times.len() >= 2 {
        let gaps: Vec<f64> = peak_times.windows(2).map(|w| w[1] - w[0]).collect();
        let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / gaps.len() as f64;
        (Some(m), Some(var.sqrt() / m))
    } else {
        (None, None)
    };

    let swings: Vec<f64> = extrema
        .iter()
        .filter_map(|e| e.trough.map(|t| values[e.peak] - values[t]))
        .collect();
    let swing_ratio = (swings.len() >= 3).then(|| {
        let third = swings.len() / 3;
        let early = swings[..third].iter().sum::<f64>() / third as f64;
        let late = swings[swings.len() - third..].iter().sum::<f64>() / third as f64;
        late / early
    });

    let decaying = swing_ratio.is_some_and(|r| r < options.decay_ratio);
    let class = if peak_times.len() >= options.min_peaks && relative_amplitude >= options.amplitude_floor && !decaying {
        OscillationClass::Sustained
    } else if relative_amplitude < options.amplitude_floor {
        OscillationClass::Converged
    } else {
        OscillationClass::Damped
    };

    Ok(SeriesOscillation {
        class,
        peak_times,
        mean_period,
        period_cv,
        relative_amplitude,
        swing_ratio,
    })
}

struct Extremum {
    peak: usize,
    /// Trough following the peak, when confirmed.
    trough: Option<usize>,
}

/// Peaks that rise at least `h` above the preceding trough and fall at least
/// `h` below themselves afterwards. Plateaus resolve to their earliest sample.
fn zigzag(values: &[f64], h: f64) -> Vec<Extremum> {
    enum Mode {
        Start,
        Rising,
        Falling,
    }
    let mut out: Vec<Extremum> = Vec::new();
    let mut mode = Mode::Start;
    let (mut lo, mut lo_idx) = (values[0], 0);
    let (mut hi, mut hi_idx) = (values[0], 0);
    for (i, &v) in values.iter().enumerate() {
        match mode {
            Mode::Start => {
                if v < lo {
                    lo = v;
                }
                if v > lo + h {
                    mode = Mode::Rising;
                    hi = v;
                    hi_idx = i;
                }
            }
            Mode::Rising => {
                if v > hi {
                    hi = v;
                    hi_idx = i;
                } else if v < hi - h {
                    out.push(Extremum {
                        peak: hi_idx,
                        trough: None,
                    });
                    mode = Mode::Falling;
                    lo = v;
                    lo_idx = i;
                }
            }
            Mode::Falling => {
                if v < lo {
                    lo = v;
                    lo_idx = i;
                } else if v > lo + h {
                    if let Some(last) = out.last_mut() {
                        last.trough = Some(lo_idx);
                    }
                    mode = Mode::Rising;
                    hi = v;
                    hi_idx = i;
                }
            }
        }
    }
    out
}
