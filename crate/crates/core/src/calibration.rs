//! Named parameter sets with their initial data and expected behaviour.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{validate_assumptions, ModelParams, RateTable, State};
use crate::solver::SolverConfig;

/// Closed-form function of the clone index `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Constant(f64),
    /// `intercept + slope x`.
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// `scale (amplitude exp(-(x - center)^2 / width) + offset)`.
    Gaussian {
        scale: f64,
        amplitude: f64,
        center: f64,
        width: f64,
        offset: f64,
    },
    /// `base + amplitude Σ_c exp(-(x - c)^2 / width)`.
    Bumps {
        base: f64,
        amplitude: f64,
        width: f64,
        centers: Vec<f64>,
    },
}

impl RateFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            RateFunction::Constant(c) => *c,
            RateFunction::Linear { intercept, slope } => intercept + slope * x,
            RateFunction::Gaussian {
                scale,
                amplitude,
                center,
                width,
                offset,
            } => scale * (amplitude * (-(x - center) * (x - center) / width).exp() + offset),
            RateFunction::Bumps {
                base,
                amplitude,
                width,
                centers,
            } => base + amplitude * centers.iter().map(|c| (-(x - c) * (x - c) / width).exp()).sum::<f64>(),
        }
    }

    pub fn sample(&self, grid: &Grid) -> RateTable {
        RateTable::sample(grid, |x| self.eval(x))
    }
}

/// `constant(c)`, `linear(intercept, slope)`,
/// `gaussian(scale, amplitude, center, width, offset)` or
/// `bumps(base, amplitude, width, c1, c2, ...)`. Numbers print in shortest
/// round-trip form.
impl fmt::Display for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFunction::Constant(c) => write!(f, "constant({c:?})"),
            RateFunction::Linear { intercept, slope } => write!(f, "linear({intercept:?}, {slope:?})"),
            RateFunction::Gaussian {
                scale,
                amplitude,
                center,
                width,
                offset,
            } => write!(
                f,
                "gaussian({scale:?}, {amplitude:?}, {center:?}, {width:?}, {offset:?})"
            ),
            RateFunction::Bumps {
                base,
                amplitude,
                width,
                centers,
            } => {
                write!(f, "bumps({base:?}, {amplitude:?}, {width:?}")?;
                for c in centers {
                    write!(f, ", {c:?}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for RateFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: &str| Error::InvalidConfig(format!("rate function `{s}`: {msg}"));
        let open = s.find('(').ok_or_else(|| bad("expected name(arguments)"))?;
        if !s.ends_with(')') {
            return Err(bad("missing closing parenthesis"));
        }
        let name = s[..open].trim();
        let inner = &s[open + 1..s.len() - 1];
        let args = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner
                .split(',')
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(&format!("`{}` is not a number", a.trim())))
                })
                .collect::<Result<Vec<f64>>>()?
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(bad(&format!("{name} takes {n} arguments, got {}", args.len())))
            }
        };
        match name {
            "constant" => {
                arity(1)?;
                Ok(RateFunction::Constant(args[0]))
            }
            "linear" => {
                arity(2)?;
                Ok(RateFunction::Linear {
                    intercept: args[0],
                    slope: args[1],
                })
            }
            "gaussian" => {
                arity(5)?;
                if !(args[3] > 0.0) {
                    return Err(bad("width must be positive"));
                }
                Ok(RateFunction::Gaussian {
                    scale: args[0],
                    amplitude: args[1],
                    center: args[2],
                    width: args[3],
                    offset: args[4],
                })
            }
            "bumps" => {
                if args.len() < 4 {
                    return Err(bad("bumps takes base, amplitude, width and at least one center"));
                }
                if !(args[2] > 0.0) {
                    return Err(bad("width must be positive"));
                }
                Ok(RateFunction::Bumps {
                    base: args[0],
                    amplitude: args[1],
                    width: args[2],
                    centers: args[3..].to_vec(),
                })
            }
            other => Err(bad(&format!("unknown function `{other}`"))),
        }
    }
}

/// Grid-independent description of a model and its initial data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// One per dividing stage.
    pub self_renewal: Vec<RateFunction>,
    /// One per dividing stage, 1/day.
    pub proliferation: Vec<RateFunction>,
    /// `K`, kg/cell.
    pub feedback_strength: f64,
    /// `d`, 1/day.
    pub clearance: f64,
    /// One per stage, cells/kg.
    pub initial: Vec<RateFunction>,
}

impl ModelSpec {
    pub fn num_stages(&self) -> usize {
        self.initial.len()
    }

    /// Sample everything on `grid`.
    pub fn build(&self, grid: &Grid) -> Result<(ModelParams, State)> {
        if self.initial.len() != self.self_renewal.len() + 1 {
            return Err(Error::Structural(format!(
                "{} initial profiles for {} dividing stages",
                self.initial.len(),
                self.self_renewal.len()
            )));
        }
        let params = ModelParams::new(
            self.self_renewal.iter().map(|f| f.sample(grid)).collect(),
            self.proliferation.iter().map(|f| f.sample(grid)).collect(),
            self.feedback_strength,
            self.clearance,
        )?;
        let initial = State::new(
            0.0,
            self.initial.iter().map(|f| f.sample(grid).values().to_vec()).collect(),
        )?;
        Ok((params, initial))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    /// One stem-cell self-renewal maximum at `x = 0.6`.
    Cal1Single,
    /// Four narrow maxima.
    Cal1Multi,
    /// Constant stem-cell self-renewal.
    Cal1Flat,
    /// Parameters with oscillating totals.
    Cal2Hopf,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::Cal1Single,
        PresetName::Cal1Multi,
        PresetName::Cal1Flat,
        PresetName::Cal2Hopf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Cal1Single => "cal1-single",
            PresetName::Cal1Multi => "cal1-multi",
            PresetName::Cal1Flat => "cal1-flat",
            PresetName::Cal2Hopf => "cal2-hopf",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| Error::UnknownPreset(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Totals converge, mass concentrates on the selected clone(s).
    Selection,
    /// Totals converge, no concentration.
    NoSelection,
    /// Totals oscillate.
    Oscillation,
}

/// What a preset is expected to do.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    /// Analytic maxima of the stem-cell self-renewal; empty when flat.
    pub selected: Vec<f64>,
    /// Analytic maximum of the progenitor self-renewal.
    pub progenitor_max: f64,
    pub regime: Regime,
}

impl Expectation {
    /// Points the grid must represent exactly.
    pub fn markers(&self) -> Vec<f64> {
        let mut m = self.selected.clone();
        m.push(self.progenitor_max);
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: PresetName,
    pub spec: ModelSpec,
    pub params: ModelParams,
    pub initial: State,
    pub solver_defaults: SolverConfig,
    pub expected: Expectation,
}

const K_FEEDBACK: f64 = 1.75e-9;
const MULTI_CENTERS: [f64; 4] = [0.35, 0.55, 0.7, 0.85];
const MULTI_WIDTH: f64 = 0.0025;

fn initial_profile(amplitude: f64) -> RateFunction {
    RateFunction::Gaussian {
        scale: amplitude,
        amplitude: 1.0,
        center: 0.0,
        width: 0.2,
        offset: 0.0,
    }
}

fn stem_single(scale: f64) -> RateFunction {
    RateFunction::Gaussian {
        scale,
        amplitude: 1.0,
        center: 0.6,
        width: 9.68,
        offset: -0.1135,
    }
}

fn progenitor(scale: f64) -> RateFunction {
    RateFunction::Gaussian {
        scale,
        amplitude: 0.5,
        center: 0.4,
        width: 8.82,
        offset: 0.349,
    }
}

fn linear(intercept: f64, slope: f64) -> RateFunction {
    RateFunction::Linear { intercept, slope }
}

/// Grid-independent description of a preset.
pub fn preset_spec(name: PresetName) -> (ModelSpec, Expectation) {
    let cal1 = |a1: RateFunction| ModelSpec {
        self_renewal: vec![a1, progenitor(1.0)],
        proliferation: vec![linear(0.1, 0.2), linear(0.4, 0.5)],
        feedback_strength: K_FEEDBACK,
        clearance: 2.0,
        initial: vec![initial_profile(2.5e7), initial_profile(3.8e9), initial_profile(1e8)],
    };
    match name {
        PresetName::Cal1Single => (
            cal1(stem_single(1.0)),
            Expectation {
                selected: vec![0.6],
                progenitor_max: 0.4,
                regime: Regime::Selection,
            },
        ),
        PresetName::Cal1Multi => {
            let base = 0.85 - 0.1 * MULTI_CENTERS.iter().map(|c| (-c * c / MULTI_WIDTH).exp()).sum::<f64>();
            (
                cal1(RateFunction::Bumps {
                    base,
                    amplitude: 0.1,
                    width: MULTI_WIDTH,
                    centers: MULTI_CENTERS.to_vec(),
                }),
                Expectation {
                    selected: MULTI_CENTERS.to_vec(),
                    progenitor_max: 0.4,
                    regime: Regime::Selection,
                },
            )
        }
        PresetName::Cal1Flat => (
            cal1(RateFunction::Constant(0.88)),
            Expectation {
                selected: Vec::new(),
                progenitor_max: 0.4,
                regime: Regime::NoSelection,
            },
        ),
        PresetName::Cal2Hopf => (
            ModelSpec {
                self_renewal: vec![stem_single(0.7 / 0.8865), progenitor(0.6 / 0.8467)],
                proliferation: vec![linear(0.975, 0.025), linear(0.04, 0.0333)],
                feedback_strength: K_FEEDBACK,
                clearance: 0.15,
                initial: vec![initial_profile(4.37e6), initial_profile(5e8), initial_profile(4.28e8)],
            },
            Expectation {
                selected: vec![0.6],
                progenitor_max: 0.4,
                regime: Regime::Oscillation,
            },
        ),
    }
}

/// Build a preset on `grid`. The grid must place every marker (selected
/// clones, progenitor maximum) on a point or a cell boundary.
pub fn build_preset(name: PresetName, grid: &Grid) -> Result<Preset> {
    let (_, expected) = preset_spec(name);
    for x in expected.markers() {
        if !grid.aligns(x) {
            return Err(Error::MisalignedGrid {
                num_points: grid.num_points(),
                x,
                offset: grid.offset_to(x),
            });
        }
    }
    build_preset_unaligned(name, grid)
}

/// [`build_preset`] without the alignment check.
pub fn build_preset_unaligned(name: PresetName, grid: &Grid) -> Result<Preset> {
    let (spec, expected) = preset_spec(name);
    let (params, initial) = spec.build(grid)?;
    validate_assumptions(&params, grid)?.into_result()?;
    Ok(Preset {
        name,
        spec,
        params,
        initial,
        solver_defaults: SolverConfig::desk_scale(),
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::concentration::table_maxima;
    use crate::grid::GridKind;
    use approx::assert_relative_eq;

    fn a(name: PresetName, stage: usize) -> RateFunction {
        preset_spec(name).0.self_renewal[stage].clone()
    }

    #[test]
    fn single_peak_values() {
        let a1 = a(PresetName::Cal1Single, 0);
        let a2 = a(PresetName::Cal1Single, 1);
        assert_relative_eq!(a1.eval(0.6), 0.8865, max_relative = 1e-15);
        assert_relative_eq!(a2.eval(0.4), 0.849, max_relative = 1e-15);
        assert_relative_eq!(a1.eval(0.0), 0.85, epsilon = 1e-5);
        assert_relative_eq!(a2.eval(0.0), 0.84, epsilon = 1e-3);
    }

    #[test]
    fn bump_heights() {
        let a1 = a(PresetName::Cal1Multi, 0);
        let peaks: Vec<f64> = MULTI_CENTERS.iter().map(|&c| a1.eval(c)).collect();
        // Neighbouring bumps 0.15 apart contribute 0.1 exp(-9) each.
        let cross = 0.1 * (-9.0f64).exp();
        for p in &peaks {
            assert!((p - 0.95).abs() <= 2.0 * cross + 1e-12, "{p}");
        }
        let spread = peaks.iter().copied().fold(f64::MIN, f64::max) - peaks.iter().copied().fold(f64::MAX, f64::min);
        assert!(spread <= 2.0 * cross, "{spread}");
        assert_relative_eq!(a1.eval(0.0), 0.85, max_relative = 1e-15);
    }

    #[test]
    fn second_calibration_normalisation() {
        let a1 = a(PresetName::Cal2Hopf, 0);
        let a2 = a(PresetName::Cal2Hopf, 1);
        assert_relative_eq!(a1.eval(0.6), 0.7, max_relative = 1e-15);
        // 0.8467 is the unscaled progenitor value at x = 0.6, not at its peak.
        assert_relative_eq!(a2.eval(0.6), 0.6, epsilon = 1e-4);
        assert_relative_eq!(a2.eval(0.4), 0.6 * 0.849 / 0.8467, max_relative = 1e-12);
    }

    #[test]
    fn presets_validate_on_default_grid() {
        let grid = Grid::midpoint(200).unwrap();
        for name in PresetName::ALL {
            let preset = build_preset(name, &grid).unwrap();
            let report = validate_assumptions(&preset.params, &grid).unwrap();
            assert!(report.is_ok(), "{name}: {report}");
            assert!(preset.initial.densities().as_slice().iter().all(|&v| v > 0.0));
            let ordering_warnings = !report.warnings.is_empty();
            assert_eq!(ordering_warnings, name == PresetName::Cal2Hopf, "{name}");
        }
    }

    #[test]
    fn first_calibration_ranges() {
        let grid = Grid::midpoint(200).unwrap();
        for name in [PresetName::Cal1Single, PresetName::Cal1Multi] {
            let p = build_preset(name, &grid).unwrap();
            let a1 = p.params.self_renewal(0);
            assert!(a1.inf() >= 0.85 && a1.sup() <= 0.99, "{name}");
            let p1 = p.params.proliferation(0).values();
            assert!(p1.iter().all(|&v| (0.1..1.0).contains(&v)));
        }
    }

    #[test]
    fn maxima_land_on_markers() {
        let grid = Grid::midpoint(200).unwrap();
        for name in [PresetName::Cal1Single, PresetName::Cal1Multi, PresetName::Cal2Hopf] {
            let p = build_preset(name, &grid).unwrap();
            let found = table_maxima(p.params.self_renewal(0), &grid, 1e-3);
            assert_eq!(found.len(), p.expected.selected.len(), "{name}");
            // Neighbouring bumps tilt each peak, so its two straddling cells
            // differ and the maximum lands half a cell off the centre.
            for (f, e) in found.iter().zip(&p.expected.selected) {
                assert_relative_eq!(*f, *e, epsilon = 0.5 * grid.cell_width() + 1e-12);
            }
            let prog = table_maxima(p.params.self_renewal(1), &grid, 1e-12);
            assert_relative_eq!(prog[0], 0.4, epsilon = 1e-12);
        }
    }

    #[test]
    fn misaligned_grid_rejected() {
        let grid = Grid::midpoint(7).unwrap();
        assert!(matches!(
            build_preset(PresetName::Cal1Single, &grid),
            Err(Error::MisalignedGrid { .. })
        ));
        assert!(build_preset_unaligned(PresetName::Cal1Single, &grid).is_ok());
    }

    #[test]
    fn vertex_grid_rejects_second_calibration() {
        // p_1(1) = 1.0 sits on the boundary of the open range.
        let grid = Grid::new(GridKind::Vertex, 201).unwrap();
        assert!(matches!(
            build_preset(PresetName::Cal2Hopf, &grid),
            Err(Error::Assumptions(_))
        ));
        assert!(build_preset(PresetName::Cal1Single, &grid).is_ok());
    }

    #[test]
    fn names_round_trip() {
        for name in PresetName::ALL {
            assert_eq!(name.as_str().parse::<PresetName>().unwrap(), name);
        }
        assert!(matches!("cal3".parse::<PresetName>(), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn rate_functions_round_trip() {
        for name in PresetName::ALL {
            let (spec, _) = preset_spec(name);
            for f in spec.self_renewal.iter().chain(&spec.proliferation).chain(&spec.initial) {
                let back: RateFunction = f.to_string().parse().unwrap();
                assert_eq!(&back, f);
            }
        }
        assert!("gaussian(1, 2)".parse::<RateFunction>().is_err());
        assert!("sine(1)".parse::<RateFunction>().is_err());
        assert!("constant(x)".parse::<RateFunction>().is_err());
    }
}
