//! The three subcommands: `simulate`, `reproduce` and `verify`.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use clap::ValueEnum;
use clonesel_core::analysis::concentration::{has_full_support, peak_window_fraction};
use clonesel_core::analysis::growth::SignReport;
use clonesel_core::analysis::{
    bound_estimates, check_bounds, check_theorem_signs, concentration_report, detect_oscillations, table_maxima,
    window_fraction, OscillationClass, OscillationOptions, OscillationReport, SignThresholds,
};
use clonesel_core::{
    build_preset, build_preset_unaligned, ide_to_ode, ode_simulate, simulate as run_solver, validate_assumptions,
    Error, Grid, ModelParams, PresetName, SolverConfig, State, Trajectory,
};
use log::{info, warn};

use crate::config::{num, ModelSource, RunConfig};
use crate::error::Result;
use crate::output::{ensure_dir, write_heatmaps, write_text, write_totals};

/// A model on a grid, ready to run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub label: String,
    pub grid: Grid,
    pub params: ModelParams,
    pub initial: State,
    pub solver: SolverConfig,
    /// Clones expected to be selected (the stem-cell self-renewal maxima).
    pub selected: Vec<f64>,
    /// Maximum of the first progenitor self-renewal, if there is one.
    pub progenitor_max: Option<f64>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let grid = cfg.grid()?;
    let solver = cfg.solver_config();
    match &cfg.model {
        ModelSource::Preset(name) => {
            let preset = match build_preset(*name, &grid) {
                Err(Error::MisalignedGrid { x, offset, .. }) => {
                    warn!(
                        "{} grid points miss the marker x = {x} by {offset:.3e}; results near it are smeared",
                        grid.num_points()
                    );
                    build_preset_unaligned(*name, &grid)?
                }
                other => other?,
            };
            Ok(Prepared {
                label: name.to_string(),
                grid,
                params: preset.params,
                initial: preset.initial,
                solver,
                selected: preset.expected.selected.clone(),
                progenitor_max: Some(preset.expected.progenitor_max),
            })
        }
        ModelSource::Inline(spec) => {
            let (params, initial) = spec.build(&grid)?;
            validate_assumptions(&params, &grid)?.into_result()?;
            let maxima = |stage: usize| {
                let t = params.self_renewal(stage);
                if t.sup() - t.inf() <= 1e-12 * t.sup().abs() {
                    Vec::new()
                } else {
                    table_maxima(t, &grid, 1e-12)
                }
            };
            let selected = maxima(0);
            let progenitor_max = if params.num_stages() > 2 {
                maxima(1).first().copied()
            } else {
                None
            };
            Ok(Prepared {
                label: "inline".into(),
                grid,
                params,
                initial,
                solver,
                selected,
                progenitor_max,
            })
        }
    }
}

pub fn run(p: &Prepared) -> Result<Trajectory> {
    info!(
        "{}: {} points, dt {}, horizon {}",
        p.label,
        p.grid.num_points(),
        p.solver.dt,
        p.solver.horizon
    );
    let traj = run_solver(&p.initial, &p.params, &p.grid, &p.solver)?;
    info!("{}: {} steps in {:.2?}", p.label, traj.meta.steps, traj.meta.wall_clock);
    Ok(traj)
}

/// Trailing `fraction` of the run.
fn trailing(traj: &Trajectory, fraction: f64) -> (f64, f64) {
    let t0 = *traj.times.first().unwrap();
    let t1 = *traj.times.last().unwrap();
    (t1 - fraction * (t1 - t0), t1)
}

/// Summary of one run, written to report.txt.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub label: String,
    pub grid_points: usize,
    pub dt: f64,
    pub horizon: f64,
    pub steps: usize,
    pub clamped: usize,
    pub wall_seconds: f64,
    pub final_time: f64,
    pub final_totals: Vec<f64>,
    pub final_signal: f64,
    pub full_support: Vec<bool>,
    /// `(marker, mass fraction per stage within the half-width)`.
    pub windows: Vec<(f64, Vec<f64>)>,
    /// Largest window fraction of the stem cells and where it sits.
    pub peak_window: (f64, f64),
    pub oscillation: std::result::Result<OscillationReport, String>,
    pub signs: std::result::Result<SignReport, String>,
    pub bound_violations: usize,
}

pub fn analyse(p: &Prepared, traj: &Trajectory, cfg: &RunConfig) -> Result<RunReport> {
    let a = &cfg.analysis;
    let state = traj.final_state();
    let last = traj.totals.last().expect("a run records its initial totals");
    let m = state.num_stages();
    let mut markers = p.selected.clone();
    markers.extend(p.progenitor_max);
    markers.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let windows = markers
        .iter()
        .map(|&c| {
            (
                c,
                (0..m)
                    .map(|i| window_fraction(state.stage(i), &p.grid, c, a.half_width))
                    .collect(),
            )
        })
        .collect();
    let osc_opts = OscillationOptions {
        prominence_floor: a.prominence_floor,
        amplitude_floor: a.amplitude_floor,
        min_peaks: a.min_peaks,
        ..OscillationOptions::default()
    };
    let oscillation =
        detect_oscillations(&traj.totals, trailing(traj, a.oscillation_window), &osc_opts).map_err(|e| e.to_string());
    let thresholds = SignThresholds {
        stem_tolerance: a.stem_tolerance,
        progenitor_ceiling: a.progenitor_ceiling,
    };
    let signs = check_theorem_signs(traj, trailing(traj, a.sign_window), &thresholds).map_err(|e| e.to_string());
    let bounds = bound_estimates(&p.params, &p.initial)?;
    Ok(RunReport {
        label: p.label.clone(),
        grid_points: p.grid.num_points(),
        dt: p.solver.dt,
        horizon: p.solver.horizon,
        steps: traj.meta.steps,
        clamped: traj.meta.clamped,
        wall_seconds: traj.meta.wall_clock.as_secs_f64(),
        final_time: state.time(),
        final_totals: last.totals,
        final_signal: last.signal,
        full_support: (0..m)
            .map(|i| has_full_support(state.stage(i), a.support_threshold))
            .collect(),
        windows,
        peak_window: peak_window_fraction(state.stage(0), &p.grid, a.half_width),
        oscillation,
        signs,
        bound_violations: check_bounds(&traj.totals, &bounds).len(),
    })
}

impl RunReport {
    /// Mature-cell oscillation class, if it could be determined.
    pub fn mature_class(&self) -> Option<OscillationClass> {
        self.oscillation
            .as_ref()
            .ok()
            .and_then(|o| o.compartments.last())
            .map(|c| c.class)
    }

    /// `key=value` lines, one fact each.
    pub fn machine_lines(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: String, v: String| out.push((k, v));
        put("model".into(), self.label.clone());
        put("grid_points".into(), self.grid_points.to_string());
        put("dt".into(), num(self.dt));
        put("horizon".into(), num(self.horizon));
        put("steps".into(), self.steps.to_string());
        put("clamped".into(), self.clamped.to_string());
        put("final_time".into(), num(self.final_time));
        for (i, r) in self.final_totals.iter().enumerate() {
            put(format!("rho_{}", i + 1), num(*r));
        }
        put("signal".into(), num(self.final_signal));
        for (i, f) in self.full_support.iter().enumerate() {
            put(format!("full_support_{}", i + 1), f.to_string());
        }
        for (c, fr) in &self.windows {
            for (i, f) in fr.iter().enumerate() {
                put(format!("window_{}_at_{c}", i + 1), num(*f));
            }
        }
        put("peak_window_center".into(), num(self.peak_window.0));
        put("peak_window_fraction".into(), num(self.peak_window.1));
        match &self.oscillation {
            Ok(o) => {
                for (i, c) in o.compartments.iter().enumerate() {
                    put(format!("oscillation_{}", i + 1), c.class.as_str().into());
                    put(format!("peaks_{}", i + 1), c.peak_times.len().to_string());
                    put(format!("relative_amplitude_{}", i + 1), num(c.relative_amplitude));
                    if let Some(p) = c.mean_period {
                        put(format!("period_{}", i + 1), num(p));
                    }
                }
            }
            Err(_) => put("oscillation".into(), "undetermined".into()),
        }
        match &self.signs {
            Ok(s) => {
                put("stem_max_rate".into(), num(s.stem_max_rate));
                for (i, r) in s.progenitor_max_rates.iter().enumerate() {
                    put(format!("progenitor_max_rate_{}", i + 2), num(*r));
                }
                put("signs_ok".into(), s.passed().to_string());
            }
            Err(_) => put("signs_ok".into(), "undetermined".into()),
        }
        put("bound_violations".into(), self.bound_violations.to_string());
        out
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "model {} on {} points, dt {}, horizon {}",
            self.label, self.grid_points, self.dt, self.horizon
        )?;
        writeln!(
            f,
            "{} steps in {:.2} s, {} clamped values",
            self.steps, self.wall_seconds, self.clamped
        )?;
        let rho: Vec<String> = self.final_totals.iter().map(|r| format!("{r:.5e}")).collect();
        writeln!(
            f,
            "final totals at t = {}: {}, signal {:.6}",
            self.final_time,
            rho.join(", "),
            self.final_signal
        )?;
        let support: Vec<&str> = self
            .full_support
            .iter()
            .map(|&b| if b { "full" } else { "partial" })
            .collect();
        writeln!(f, "support by stage: {}", support.join(", "))?;
        for (c, fr) in &self.windows {
            let fr: Vec<String> = fr.iter().map(|v| format!("{v:.4}")).collect();
            writeln!(f, "mass near x = {c}: {}", fr.join(", "))?;
        }
        writeln!(
            f,
            "largest stem-cell window: {:.4} at x = {:.4}",
            self.peak_window.1, self.peak_window.0
        )?;
        match &self.oscillation {
            Ok(o) => {
                for (i, c) in o.compartments.iter().enumerate() {
                    let period = c.mean_period.map_or(String::new(), |p| format!(", period {p:.1}"));
                    writeln!(
                        f,
                        "rho_{} over [{}, {}]: {} ({} peaks, amplitude {:.3}{period})",
                        i + 1,
                        o.window.0,
                        o.window.1,
                        c.class.as_str(),
                        c.peak_times.len(),
                        c.relative_amplitude
                    )?;
                }
            }
            Err(e) => writeln!(f, "oscillation undetermined: {e}")?,
        }
        match &self.signs {
            Ok(s) => writeln!(
                f,
                "growth-integral rates over [{}, {}]: stem max {:.3e}, progenitor max {:?} ({})",
                s.window.0,
                s.window.1,
                s.stem_max_rate,
                s.progenitor_max_rates,
                if s.passed() { "as expected" } else { "unexpected" }
            )?,
            Err(e) => writeln!(f, "growth-integral signs undetermined: {e}")?,
        }
        writeln!(f, "bound violations: {}", self.bound_violations)?;
        writeln!(f)?;
        writeln!(f, "[machine]")?;
        for (k, v) in self.machine_lines() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SimulateOutcome {
    pub report: RunReport,
    pub files: Vec<PathBuf>,
}

/// Run the configured model and write totals.csv, heatmap_stage<i>.csv and
/// report.txt to the output directory.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateOutcome> {
    let p = prepare(cfg)?;
    ensure_dir(&cfg.output_dir)?;
    let traj = run(&p)?;
    let report = analyse(&p, &traj, cfg)?;
    let mut files = write_run(cfg, &p, &traj, "totals.csv", true)?;
    let path = cfg.output_dir.join("report.txt");
    write_text(&path, &report.to_string())?;
    files.push(path);
    Ok(SimulateOutcome { report, files })
}

fn write_run(
    cfg: &RunConfig,
    p: &Prepared,
    traj: &Trajectory,
    totals_name: &str,
    heatmaps: bool,
) -> Result<Vec<PathBuf>> {
    let dir = &cfg.output_dir;
    let totals = dir.join(totals_name);
    write_totals(&totals, &traj.totals, cfg.totals_stride)?;
    let mut files = vec![totals];
    if heatmaps {
        files.extend(write_heatmaps(dir, traj, &p.grid, cfg.heatmap_frames)?);
    }
    Ok(files)
}

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "pass" } else { "fail" };
        write!(f, "check={} status={status} detail=\"{}\"", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl Figure {
    pub const ALL: [Figure; 6] = [
        Figure::Fig2,
        Figure::Fig3,
        Figure::Fig4,
        Figure::Fig5,
        Figure::Fig6,
        Figure::Fig7,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }

    pub fn presets(&self) -> Vec<PresetName> {
        match self {
            Figure::Fig2 => vec![PresetName::Cal1Single],
            Figure::Fig3 => vec![PresetName::Cal1Multi],
            Figure::Fig4 => vec![PresetName::Cal1Flat],
            Figure::Fig5 => vec![PresetName::Cal1Single, PresetName::Cal1Multi, PresetName::Cal1Flat],
            Figure::Fig6 | Figure::Fig7 => vec![PresetName::Cal2Hopf],
        }
    }

    fn is_heatmap(&self) -> bool {
        matches!(self, Figure::Fig2 | Figure::Fig3 | Figure::Fig4 | Figure::Fig6)
    }
}

#[derive(Debug)]
pub struct FigureOutcome {
    pub figure: Figure,
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

/// Regenerate the data behind one figure in `<output.dir>/<figure>/`.
///
/// Heatmap figures get the normalised densities of every stage plus
/// markers.txt with the reference lines (black: stem-cell self-renewal
/// maxima, white: progenitor maximum). Totals figures get one totals file
/// per preset. The checks are the qualitative features the figure shows.
pub fn reproduce(figure: Figure, cfg: &RunConfig) -> Result<FigureOutcome> {
    let mut base = cfg.clone();
    base.output_dir = cfg.output_dir.join(figure.as_str());
    ensure_dir(&base.output_dir)?;

    let configs: Vec<RunConfig> = figure
        .presets()
        .into_iter()
        .map(|name| RunConfig {
            model: ModelSource::Preset(name),
            ..base.clone()
        })
        .collect();
    let prepared: Vec<Prepared> = configs.iter().map(prepare).collect::<Result<_>>()?;
    let trajectories: Vec<Result<Trajectory>> = std::thread::scope(|s| {
        let handles: Vec<_> = prepared.iter().map(|p| s.spawn(move || run(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });

    let mut files = Vec::new();
    let mut checks = Vec::new();
    let mut markers = String::new();
    for ((p, c), traj) in prepared.iter().zip(&configs).zip(trajectories) {
        let traj = traj?;
        let report = analyse(p, &traj, c)?;
        if figure.is_heatmap() {
            files.extend(write_run(c, p, &traj, "totals.csv", true)?);
            for x in &p.selected {
                let _ = writeln!(markers, "black = {x}");
            }
            if let Some(x) = p.progenitor_max {
                let _ = writeln!(markers, "white = {x}");
            }
        } else {
            files.extend(write_run(c, p, &traj, &format!("totals_{}.csv", p.label), false)?);
        }
        checks.extend(figure_checks(figure, p, &traj, &report, c));
    }
    if !figure.is_heatmap() {
        markers.push_str("totals_unit = 1e7\n");
    }
    let path = base.output_dir.join("markers.txt");
    write_text(&path, &markers)?;
    files.push(path);
    let path = base.output_dir.join("checks.txt");
    let text: String = checks.iter().map(|c| format!("{c}\n")).collect();
    write_text(&path, &text)?;
    files.push(path);
    Ok(FigureOutcome { figure, checks, files })
}

fn figure_checks(figure: Figure, p: &Prepared, traj: &Trajectory, report: &RunReport, cfg: &RunConfig) -> Vec<Check> {
    let state = traj.final_state();
    let hw = cfg.analysis.half_width;
    let peaks_near = |target: f64| -> Check {
        let argmax: Vec<f64> = (0..state.num_stages())
            .map(|i| {
                let v = state.stage(i);
                let k = (0..v.len()).fold(0, |b, k| if v[k] > v[b] { k } else { b });
                p.grid.points()[k]
            })
            .collect();
        Check::new(
            format!("{}.peak_at_{target}", p.label),
            argmax.iter().all(|x| (x - target).abs() <= hw),
            format!("density maxima by stage at {argmax:?}"),
        )
    };
    let class_is = |want: OscillationClass| -> Check {
        let got = report.mature_class();
        Check::new(
            format!("{}.mature_{}", p.label, want.as_str()),
            got == Some(want),
            match got {
                Some(c) => format!("mature totals {}", c.as_str()),
                None => "oscillation undetermined".to_string(),
            },
        )
    };
    match figure {
        Figure::Fig2 => vec![peaks_near(0.6)],
        Figure::Fig3 => {
            let rep = concentration_report(state, 0, &p.grid, &p.selected, 0.03, cfg.analysis.support_threshold);
            let each: Vec<f64> = rep.windows.iter().map(|w| w.fraction).collect();
            vec![Check::new(
                format!("{}.mass_on_maxima", p.label),
                rep.total_fraction() >= 0.95 && each.iter().all(|&f| f >= 0.01),
                format!("stem-cell mass near each maximum {each:.4?}"),
            )]
        }
        Figure::Fig4 => vec![Check::new(
            format!("{}.full_support", p.label),
            report.full_support.iter().all(|&b| b) && report.peak_window.1 <= 0.5,
            format!(
                "support {:?}, largest window {:.4}",
                report.full_support, report.peak_window.1
            ),
        )],
        Figure::Fig5 => vec![class_is(OscillationClass::Converged)],
        Figure::Fig6 => vec![peaks_near(0.6)],
        Figure::Fig7 => vec![class_is(OscillationClass::Sustained)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Bounds,
    Theorem,
    OdeEquivalence,
    All,
}

impl Suite {
    fn includes(&self, other: Suite) -> bool {
        *self == Suite::All || *self == other
    }
}

/// Run the configured model and check it. Suites share one run and are
/// evaluated concurrently; the structured/compartmental comparison runs the
/// compartmental system alongside.
pub fn verify(suite: Suite, cfg: &RunConfig) -> Result<Vec<Check>> {
    let p = prepare(cfg)?;
    let want_ode = suite.includes(Suite::OdeEquivalence);
    let bridged = if want_ode {
        Some(ide_to_ode(&p.initial, &p.params, &p.grid)?)
    } else {
        None
    };
    let solver = &p.solver;
    let (traj, ode) = std::thread::scope(|s| {
        let ode = bridged
            .as_ref()
            .map(|(state, params)| s.spawn(move || ode_simulate(state, params, solver)));
        let traj = run(&p);
        (traj, ode.map(|h| h.join().expect("solver thread panicked")))
    });
    let traj = traj?;
    let ode = ode.transpose()?;

    let mut checks = std::thread::scope(|s| -> Result<Vec<Check>> {
        let mut handles = Vec::new();
        if suite.includes(Suite::Bounds) {
            handles.push(s.spawn(|| -> Result<Check> {
                let b = bound_estimates(&p.params, &p.initial)?;
                let v = check_bounds(&traj.totals, &b);
                let detail = match v.first() {
                    None => format!("{} samples within every bound", traj.totals.len()),
                    Some(first) => format!(
                        "{} violations, first at t = {}: stage {} value {:.4e} > {:.4e}",
                        v.len(),
                        first.time,
                        first.stage + 1,
                        first.value,
                        first.bound
                    ),
                };
                Ok(Check::new("bounds", v.is_empty(), detail))
            }));
        }
        if suite.includes(Suite::Theorem) {
            handles.push(s.spawn(|| -> Result<Check> {
                let a = &cfg.analysis;
                let th = SignThresholds {
                    stem_tolerance: a.stem_tolerance,
                    progenitor_ceiling: a.progenitor_ceiling,
                };
                let r = check_theorem_signs(&traj, trailing(&traj, a.sign_window), &th)?;
                Ok(Check::new(
                    "theorem",
                    r.passed(),
                    format!(
                        "stem max rate {:.3e} (|.| <= {}), progenitor max rates {:?} (<= {})",
                        r.stem_max_rate, a.stem_tolerance, r.progenitor_max_rates, a.progenitor_ceiling
                    ),
                ))
            }));
        }
        if let Some(ode) = &ode {
            let traj = &traj;
            handles.push(s.spawn(move || -> Result<Check> {
                let (a, b) = (&traj.totals, &ode.totals);
                if a.len() != b.len() || a.times() != b.times() {
                    return Ok(Check::new("ode-equivalence", false, "sample times differ"));
                }
                let mut worst = 0.0f64;
                for j in 0..a.len() {
                    for (x, y) in a.rho(j).iter().zip(b.rho(j)) {
                        let scale = x.abs().max(y.abs());
                        if scale > 0.0 {
                            worst = worst.max((x - y).abs() / scale);
                        }
                    }
                }
                Ok(Check::new(
                    "ode-equivalence",
                    worst <= 1e-10,
                    format!("max relative deviation {worst:.3e} over {} samples (<= 1e-10)", a.len()),
                ))
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("check thread panicked"))
            .collect()
    })?;
    for c in &mut checks {
        c.name = format!("{}.{}", p.label, c.name);
    }

    ensure_dir(&cfg.output_dir)?;
    let text: String = checks.iter().map(|c| format!("{c}\n")).collect();
    write_text(&cfg.output_dir.join("verify.txt"), &text)?;
    Ok(checks)
}
