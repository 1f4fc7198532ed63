//! Run configuration: a line-oriented `key = value` format with `#`
//! comments and dotted keys.
//!
//! ```text
//! preset = cal1-single
//! grid.points = 200
//! solver.dt = 1e-2
//! output.dir = runs/single
//! ```
//!
//! Instead of `preset`, a model can be given inline with `model.stages`,
//! `model.feedback_strength`, `model.clearance`, `model.a<i>`, `model.p<i>`
//! (dividing stages) and `model.n<i>` (initial data), the functions written
//! as `constant(..)`, `linear(..)`, `gaussian(..)` or `bumps(..)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clonesel_core::calibration::preset_spec;
use clonesel_core::{
    validate_assumptions, Grid, GridKind, Integrator, ModelSpec, PresetName, RateFunction, SolverConfig,
};

use crate::error::{CliError, Result};

pub const DEFAULT_GRID_POINTS: usize = 200;
pub const PAPER_GRID_POINTS: usize = 1000;
/// Snapshots kept over a run when `solver.record_every` is not given.
pub const DEFAULT_SNAPSHOTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Preset(PresetName),
    Inline(ModelSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Half-width of the concentration windows.
    pub half_width: f64,
    /// Full support means every value exceeds this fraction of the maximum.
    pub support_threshold: f64,
    /// Trailing fraction of the horizon used for the growth-integral signs.
    pub sign_window: f64,
    /// Trailing fraction of the horizon used for oscillation detection.
    pub oscillation_window: f64,
    pub stem_tolerance: f64,
    pub progenitor_ceiling: f64,
    pub prominence_floor: f64,
    pub amplitude_floor: f64,
    pub min_peaks: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            half_width: 0.05,
            support_threshold: 1e-12,
            sign_window: 0.25,
            oscillation_window: 0.5,
            stem_tolerance: 1e-3,
            progenitor_ceiling: -1e-2,
            prominence_floor: 0.01,
            amplitude_floor: 0.05,
            min_peaks: 5,
        }
    }
}

/// Everything a command needs. Unset optional values resolve to the desk
/// defaults, or to the paper discretisation when `paper_fidelity` is on.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSource,
    pub grid_points: Option<usize>,
    pub grid_kind: GridKind,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub record_every: Option<usize>,
    pub integrator: Integrator,
    pub paper_fidelity: bool,
    pub output_dir: PathBuf,
    /// Keep every this many entries of the totals series in totals.csv.
    pub totals_stride: usize,
    /// Most snapshots written to each heatmap file.
    pub heatmap_frames: usize,
    pub analysis: AnalysisOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Preset(PresetName::Cal1Single),
            grid_points: None,
            grid_kind: GridKind::Midpoint,
            dt: None,
            horizon: None,
            record_every: None,
            integrator: Integrator::ForwardEuler,
            paper_fidelity: false,
            output_dir: PathBuf::from("out"),
            totals_stride: 10,
            heatmap_frames: 200,
            analysis: AnalysisOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn for_preset(name: PresetName) -> Self {
        Self {
            model: ModelSource::Preset(name),
            ..Self::default()
        }
    }

    pub fn resolved_grid_points(&self) -> usize {
        self.grid_points.unwrap_or(if self.paper_fidelity {
            PAPER_GRID_POINTS
        } else {
            DEFAULT_GRID_POINTS
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_kind, self.resolved_grid_points())
            .map_err(|e| CliError::semantic("grid.points", e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut c = if self.paper_fidelity {
            SolverConfig::paper_fidelity()
        } else {
            SolverConfig::desk_scale()
        };
        if let Some(dt) = self.dt {
            c.dt = dt;
        }
        if let Some(h) = self.horizon {
            c.horizon = h;
        }
        c.integrator = self.integrator;
        if c.totals_every > 1 && self.dt.is_some() {
            c.totals_every = 1;
        }
        match self.record_every {
            Some(r) => c.record_every = r,
            None => c.retarget_snapshots(DEFAULT_SNAPSHOTS),
        }
        c
    }

    pub fn model_spec(&self) -> ModelSpec {
        match &self.model {
            ModelSource::Preset(name) => preset_spec(*name).0,
            ModelSource::Inline(spec) => spec.clone(),
        }
    }

    /// Semantic checks that need more than one key.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let solver = self.solver_config();
        solver.validate().map_err(|e| {
            let key = if !(solver.dt > 0.0) {
                "solver.dt"
            } else if !(solver.horizon > 0.0) {
                "solver.horizon"
            } else {
                "solver.record_every"
            };
            CliError::semantic(key, e.to_string())
        })?;
        if let ModelSource::Inline(spec) = &self.model {
            let (params, _) = spec
                .build(&grid)
                .map_err(|e| CliError::semantic("model", e.to_string()))?;
            let report = validate_assumptions(&params, &grid)?;
            if !report.is_ok() {
                return Err(CliError::semantic("model", report.to_string()));
            }
        }
        Ok(())
    }

    /// Text form accepted by [`parse_config`]. Only explicitly set values
    /// are written.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.model {
            ModelSource::Preset(name) => line("preset", name.to_string()),
            ModelSource::Inline(spec) => {
                line("model.stages", spec.num_stages().to_string());
                line("model.feedback_strength", num(spec.feedback_strength));
                line("model.clearance", num(spec.clearance));
                for (i, f) in spec.self_renewal.iter().enumerate() {
                    line(&format!("model.a{}", i + 1), f.to_string());
                }
                for (i, f) in spec.proliferation.iter().enumerate() {
                    line(&format!("model.p{}", i + 1), f.to_string());
                }
                for (i, f) in spec.initial.iter().enumerate() {
                    line(&format!("model.n{}", i + 1), f.to_string());
                }
            }
        }
        if let Some(n) = self.grid_points {
            line("grid.points", n.to_string());
        }
        line("grid.kind", self.grid_kind.as_str().to_string());
        if let Some(dt) = self.dt {
            line("solver.dt", num(dt));
        }
        if let Some(h) = self.horizon {
            line("solver.horizon", num(h));
        }
        if let Some(r) = self.record_every {
            line("solver.record_every", r.to_string());
        }
        line("solver.integrator", self.integrator.as_str().to_string());
        line("solver.paper_fidelity", self.paper_fidelity.to_string());
        line("output.dir", self.output_dir.display().to_string());
        line("output.totals_stride", self.totals_stride.to_string());
        line("output.heatmap_frames", self.heatmap_frames.to_string());
        let a = &self.analysis;
        line("analysis.half_width", num(a.half_width));
        line("analysis.support_threshold", num(a.support_threshold));
        line("analysis.sign_window", num(a.sign_window));
        line("analysis.oscillation_window", num(a.oscillation_window));
        line("analysis.stem_tolerance", num(a.stem_tolerance));
        line("analysis.progenitor_ceiling", num(a.progenitor_ceiling));
        line("analysis.prominence_floor", num(a.prominence_floor));
        line("analysis.amplitude_floor", num(a.amplitude_floor));
        line("analysis.min_peaks", a.min_peaks.to_string());
        out
    }
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parse the text format. Unknown keys and malformed lines are rejected
/// with their line number; values are checked and named on failure.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut model_keys: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut preset: Option<PresetName> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(CliError::Syntax {
                line: line_no,
                column: content.len() - content.trim_start().len() + 1,
                message: "expected `key = value`".into(),
            });
        };
        let key = content[..eq].trim();
        let value = content[eq + 1..].trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_') {
            return Err(CliError::Syntax {
                line: line_no,
                column: content.len() - content.trim_start().len() + 1,
                message: format!("malformed key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(CliError::Syntax {
                line: line_no,
                column: eq + 2,
                message: format!("missing value for `{key}`"),
            });
        }
        if let Some(first) = seen.insert(key.to_string(), line_no) {
            return Err(CliError::Syntax {
                line: line_no,
                column: 1,
                message: format!("`{key}` already set on line {first}"),
            });
        }

        let a = &mut cfg.analysis;
        match key {
            "preset" => {
                preset = Some(
                    value
                        .parse()
                        .map_err(|e: clonesel_core::Error| CliError::semantic(key, e.to_string()))?,
                )
            }
            "grid.points" => cfg.grid_points = Some(parse_count(key, value)?),
            "grid.kind" => {
                cfg.grid_kind = value
                    .parse()
                    .map_err(|e: clonesel_core::Error| CliError::semantic(key, e.to_string()))?
            }
            "solver.dt" => cfg.dt = Some(parse_positive(key, value)?),
            "solver.horizon" => cfg.horizon = Some(parse_positive(key, value)?),
            "solver.record_every" => cfg.record_every = Some(parse_count(key, value)?),
            "solver.integrator" => {
                cfg.integrator = value
                    .parse()
                    .map_err(|e: clonesel_core::Error| CliError::semantic(key, e.to_string()))?
            }
            "solver.paper_fidelity" => cfg.paper_fidelity = parse_bool(key, value)?,
            "output.dir" => cfg.output_dir = PathBuf::from(value),
            "output.totals_stride" => cfg.totals_stride = parse_count(key, value)?,
            "output.heatmap_frames" => cfg.heatmap_frames = parse_count(key, value)?,
            "analysis.half_width" => a.half_width = parse_positive(key, value)?,
            "analysis.support_threshold" => a.support_threshold = parse_unit(key, value)?,
            "analysis.sign_window" => a.sign_window = parse_unit(key, value)?,
            "analysis.oscillation_window" => a.oscillation_window = parse_unit(key, value)?,
            "analysis.stem_tolerance" => a.stem_tolerance = parse_positive(key, value)?,
            "analysis.progenitor_ceiling" => a.progenitor_ceiling = parse_float(key, value)?,
            "analysis.prominence_floor" => a.prominence_floor = parse_positive(key, value)?,
            "analysis.amplitude_floor" => a.amplitude_floor = parse_positive(key, value)?,
            "analysis.min_peaks" => a.min_peaks = parse_count(key, value)?,
            k if k.starts_with("model.") => {
                model_keys.insert(k.to_string(), (line_no, value.to_string()));
            }
            _ => {
                return Err(CliError::Syntax {
                    line: line_no,
                    column: 1,
                    message: format!("unknown key `{key}`"),
                })
            }
        }
    }

    cfg.model = match (preset, model_keys.is_empty()) {
        (Some(_), false) => {
            return Err(CliError::semantic(
                "preset",
                "give either a preset or model.* keys, not both",
            ));
        }
        (Some(name), true) => ModelSource::Preset(name),
        (None, true) => ModelSource::Preset(PresetName::Cal1Single),
        (None, false) => ModelSource::Inline(parse_model(model_keys)?),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_model(mut keys: BTreeMap<String, (usize, String)>) -> Result<ModelSpec> {
    let mut take = |key: &str| -> Result<String> {
        keys.remove(key)
            .map(|(_, v)| v)
            .ok_or_else(|| CliError::semantic(key, "missing from the inline model"))
    };
    let stages = parse_count("model.stages", &take("model.stages")?)?;
    if stages < 2 {
        return Err(CliError::semantic("model.stages", "at least two stages are required"));
    }
    let feedback_strength = parse_positive("model.feedback_strength", &take("model.feedback_strength")?)?;
    let clearance = parse_positive("model.clearance", &take("model.clearance")?)?;
    let function = |key: &str, text: String| -> Result<RateFunction> {
        text.parse()
            .map_err(|e: clonesel_core::Error| CliError::semantic(key, e.to_string()))
    };
    let mut self_renewal = Vec::new();
    let mut proliferation = Vec::new();
    for i in 1..stages {
        let (ka, kp) = (format!("model.a{i}"), format!("model.p{i}"));
        self_renewal.push(function(&ka, take(&ka)?)?);
        proliferation.push(function(&kp, take(&kp)?)?);
    }
    let mut initial = Vec::new();
    for i in 1..=stages {
        let kn = format!("model.n{i}");
        initial.push(function(&kn, take(&kn)?)?);
    }
    if let Some((key, (line, _))) = keys.into_iter().next() {
        return Err(CliError::Syntax {
            line,
            column: 1,
            message: format!("unknown key `{key}` for a {stages}-stage model"),
        });
    }
    Ok(ModelSpec {
        self_renewal,
        proliferation,
        feedback_strength,
        clearance,
        initial,
    })
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::semantic(key, format!("`{value}` is not a finite number"))),
    }
}

fn parse_positive(key: &str, value: &str) -> Result<f64> {
    let v = parse_float(key, value)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::semantic(key, format!("must be positive, got {value}")))
    }
}

fn parse_unit(key: &str, value: &str) -> Result<f64> {
    let v = parse_float(key, value)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(CliError::semantic(key, format!("must lie in (0, 1], got {value}")))
    }
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(CliError::semantic(
            key,
            format!("must be a positive integer, got {value}"),
        )),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::semantic(key, format!("expected true or false, got {value}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = parse_config("preset = cal1-single\n").unwrap();
        assert_eq!(cfg.model, ModelSource::Preset(PresetName::Cal1Single));
        assert_eq!(cfg.resolved_grid_points(), 200);
        let s = cfg.solver_config();
        assert_eq!(s.dt, 1e-2);
        assert_eq!(s.horizon, 1e4);
        assert_eq!(s.totals_every, 1);
    }

    #[test]
    fn zero_dt_names_the_key() {
        match parse_config("preset = cal1-single\nsolver.dt = 0\n") {
            Err(CliError::Semantic { key, .. }) => assert_eq!(key, "solver.dt"),
            other => panic!("{other:?}"),
        }
        match parse_config("solver.horizon = 0\n") {
            Err(CliError::Semantic { key, .. }) => assert_eq!(key, "solver.horizon"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_config("# comment\n\n  grid.points 200\n") {
            Err(CliError::Syntax { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        match parse_config("preset = cal1-single\nsolver.tolerance = 1\n") {
            Err(CliError::Syntax { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("solver.tolerance"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config("preset = cal1-single\npreset = cal1-flat\n"),
            Err(CliError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn paper_fidelity_resolution() {
        let cfg = parse_config("solver.paper_fidelity = true\n").unwrap();
        assert_eq!(cfg.resolved_grid_points(), 1000);
        let s = cfg.solver_config();
        assert_eq!(s.dt, 1e-4);
        assert_eq!(s.totals_every, 100);
        assert_eq!(s.record_every % s.totals_every, 0);
        let cfg = parse_config("solver.paper_fidelity = true\ngrid.points = 400\n").unwrap();
        assert_eq!(cfg.resolved_grid_points(), 400);
    }

    #[test]
    fn preset_and_inline_model_conflict() {
        let text = "preset = cal1-flat\nmodel.stages = 2\n";
        assert!(matches!(parse_config(text), Err(CliError::Semantic { .. })));
    }

    #[test]
    fn inline_model_must_satisfy_assumptions() {
        let text = "model.stages = 2\nmodel.feedback_strength = 1e-9\nmodel.clearance = 1\n\
                    model.a1 = constant(0.4)\nmodel.p1 = constant(0.2)\n\
                    model.n1 = constant(1e6)\nmodel.n2 = constant(1e6)\n";
        match parse_config(text) {
            Err(CliError::Semantic { key, message }) => {
                assert_eq!(key, "model");
                assert!(message.contains("self-renewal"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }
}
