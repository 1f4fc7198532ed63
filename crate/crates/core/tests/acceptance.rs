//! Acceptance suite. Each criterion is its own test and writes one
//! `PASS`/`FAIL` line to stderr (unbuffered by the test harness).
//!
//! Desk-scale discretisation: 200-cell midpoint grid, dt = 1e-2, T = 1e4.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Duration;

use clonesel_core::analysis::concentration::peak_window_fraction;
use clonesel_core::analysis::{
    bound_estimates, check_bounds, check_theorem_signs, concentration_report, detect_oscillations,
    steady_state_predictor, window_fraction, CloneRates, OscillationClass, OscillationOptions, SignThresholds,
};
use clonesel_core::{
    build_preset, ide_to_ode, ode_simulate, simulate, Grid, Preset, PresetName, SolverConfig, Trajectory,
};

const K: f64 = 1.75e-9;
const GRID_POINTS: usize = 200;
const HORIZON: f64 = 1e4;

struct Run {
    preset: Preset,
    trajectory: Trajectory,
}

struct Runs {
    grid: Grid,
    single: Run,
    multi: Run,
    flat: Run,
    hopf: Run,
}

fn grid() -> Grid {
    Grid::midpoint(GRID_POINTS).unwrap()
}

fn run(name: PresetName, grid: &Grid) -> Run {
    let preset = build_preset(name, grid).unwrap();
    let trajectory = simulate(&preset.initial, &preset.params, grid, &preset.solver_defaults).unwrap();
    Run { preset, trajectory }
}

/// The four preset runs, computed once and concurrently.
fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let grid = grid();
        let [single, multi, flat, hopf] = std::thread::scope(|s| {
            let handles = PresetName::ALL.map(|name| {
                let grid = &grid;
                s.spawn(move || run(name, grid))
            });
            handles.map(|h| h.join().unwrap())
        });
        Runs {
            grid,
            single,
            multi,
            flat,
            hopf,
        }
    })
}

fn report(id: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] {verdict} {id} {title}: {detail}");
    assert!(pass, "criterion {id} ({title}) failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

// Closed-form rate functions of the first calibration, written out here so
// the oracles below do not go through the preset builder.
fn cal1_a1(x: f64) -> f64 {
    (-(x - 0.6) * (x - 0.6) / 9.68).exp() - 0.1135
}
fn cal1_a2(x: f64) -> f64 {
    0.5 * (-(x - 0.4) * (x - 0.4) / 8.82).exp() + 0.349
}
fn cal1_p1(x: f64) -> f64 {
    0.1 + 0.2 * x
}
fn cal1_p2(x: f64) -> f64 {
    0.4 + 0.5 * x
}

#[test]
fn criterion_1_single_clone_selection() {
    let r = runs();
    let state = r.single.trajectory.final_state();
    let fractions: Vec<f64> = (0..3)
        .map(|i| window_fraction(state.stage(i), &r.grid, 0.6, 0.05))
        .collect();
    let off_peak = window_fraction(state.stage(0), &r.grid, 0.4, 0.05);
    let wall = r.single.trajectory.meta.wall_clock;
    let pass = fractions.iter().all(|&f| f >= 0.99) && off_peak <= 0.01 && wall <= Duration::from_secs(60);
    report(
        1,
        "single-clone selection",
        pass,
        &format!(
            "mass in |x-0.6|<=0.05 = {:.4}/{:.4}/{:.4} (need >= 0.99), |x-0.4|<=0.05 = {off_peak:.5} (need <= 0.01), wall {:.1?}",
            fractions[0], fractions[1], fractions[2], wall
        ),
    );
}

#[test]
fn criterion_2_equilibrium_oracle() {
    let r = runs();
    let rho = r.single.trajectory.totals.last().unwrap().totals;
    let rho3_star = (2.0 * cal1_a1(0.6) - 1.0) / K;
    let eq = steady_state_predictor(
        &CloneRates {
            self_renewal: vec![cal1_a1(0.6), cal1_a2(0.6)],
            proliferation: vec![cal1_p1(0.6), cal1_p2(0.6)],
        },
        K,
        2.0,
    )
    .unwrap();
    let e3 = rel(rho[2], rho3_star);
    let e1 = rel(rho[0], eq.rho[0]);
    let e2 = rel(rho[1], eq.rho[1]);
    report(
        2,
        "equilibrium oracle",
        (rho3_star - 4.4171e8).abs() < 1e4 && e3 <= 0.02 && e1 <= 0.05 && e2 <= 0.05,
        &format!(
            "rho_3 = {:.5e} vs {rho3_star:.5e} ({:.3}%), rho_1 {:.3}%, rho_2 {:.3}% off the predictor",
            rho[2],
            100.0 * e3,
            100.0 * e1,
            100.0 * e2
        ),
    );
}

#[test]
fn criterion_3_multi_clone_selection() {
    let r = runs();
    let state = r.multi.trajectory.final_state();
    let centers = [0.35, 0.55, 0.7, 0.85];
    let rep = concentration_report(state, 0, &r.grid, &centers, 0.03, 1e-12);
    let each: Vec<f64> = rep.windows.iter().map(|w| w.fraction).collect();
    let total = rep.total_fraction();
    report(
        3,
        "multi-clone selection",
        total >= 0.95 && each.iter().all(|&f| f >= 0.01),
        &format!("windows {each:.4?}, combined {total:.4} (need >= 0.95, each >= 0.01)"),
    );
}

#[test]
fn criterion_4_absence_of_selection() {
    let r = runs();
    let state = r.flat.trajectory.final_state();
    let rep = concentration_report(state, 0, &r.grid, &[], 0.05, 1e-12);
    let (center, peak) = peak_window_fraction(state.stage(0), &r.grid, 0.05);
    report(
        4,
        "absence of selection",
        rep.full_support && peak <= 0.5,
        &format!(
            "full support {}, largest window fraction {peak:.4} at x = {center:.4} (need <= 0.5)",
            rep.full_support
        ),
    );
}

#[test]
fn criterion_5_oscillatory_regime() {
    let r = runs();
    let osc = detect_oscillations(
        &r.hopf.trajectory.totals,
        (HORIZON / 2.0, HORIZON),
        &OscillationOptions::default(),
    )
    .unwrap();
    let mature = &osc.compartments[2];
    let frac = window_fraction(r.hopf.trajectory.final_state().stage(0), &r.grid, 0.6, 0.05);
    let pass = mature.class == OscillationClass::Sustained
        && mature.peak_times.len() >= 5
        && mature.relative_amplitude >= 0.05
        && frac >= 0.95;
    report(
        5,
        "oscillatory regime",
        pass,
        &format!(
            "rho_3 {} with {} peaks, period {:.1} d, amplitude {:.3}; stage-1 mass near 0.6 = {frac:.4}",
            mature.class.as_str(),
            mature.peak_times.len(),
            mature.mean_period.unwrap_or(f64::NAN),
            mature.relative_amplitude
        ),
    );
}

#[test]
fn criterion_6_growth_integral_signs() {
    let r = runs();
    let sign = check_theorem_signs(
        &r.single.trajectory,
        (0.75 * HORIZON, HORIZON),
        &SignThresholds::default(),
    )
    .unwrap();
    // 0.6 is a cell boundary; average the two straddling cells.
    let k = r.grid.nearest_index(0.6);
    let at_peak = 0.5 * (sign.rates[1][k] + sign.rates[1][k + 1]);
    let oracle = (cal1_a2(0.6) / cal1_a1(0.6) - 1.0) * cal1_p2(0.6);
    let pass = sign.passed() && rel(at_peak, oracle) <= 0.2;
    report(
        6,
        "growth-integral signs",
        pass,
        &format!(
            "max_x R_1 rate {:.2e}/d (need |.| <= 1e-3), max_x R_2 rate {:.4}/d (need <= -1e-2), R_2 rate at 0.6 {at_peak:.4} vs {oracle:.4}",
            sign.stem_max_rate, sign.progenitor_max_rates[0]
        ),
    );
}

#[test]
fn criterion_7_a_priori_bounds() {
    let r = runs();
    let mut details = Vec::new();
    let mut pass = true;
    for run in [&r.single, &r.multi, &r.flat, &r.hopf] {
        let bounds = bound_estimates(&run.preset.params, &run.preset.initial).unwrap();
        let absolute_present = bounds.rho_bar[0].is_some() && bounds.rho_bar.last().unwrap().is_some();
        let violations = check_bounds(&run.trajectory.totals, &bounds);
        pass &= absolute_present && violations.is_empty();
        details.push(format!("{} {} violations", run.preset.name, violations.len()));
    }
    report(7, "a-priori bounds", pass, &details.join(", "));
}

#[test]
fn criterion_8_ode_equivalence() {
    let r = runs();
    let (state, params) = ide_to_ode(&r.single.preset.initial, &r.single.preset.params, &r.grid).unwrap();
    let ode = ode_simulate(&state, &params, &r.single.preset.solver_defaults).unwrap();
    let ide = &r.single.trajectory.totals;
    assert_eq!(ode.totals.len(), ide.len());
    let mut worst = 0.0f64;
    for j in 0..ide.len() {
        assert_eq!(ode.totals.times()[j], ide.times()[j]);
        for (a, b) in ide.rho(j).iter().zip(ode.totals.rho(j)) {
            worst = worst.max(rel(*a, *b));
        }
    }
    report(
        8,
        "structured/compartmental equivalence",
        worst <= 1e-10,
        &format!(
            "max relative deviation of rho_i over {} samples: {worst:.2e}",
            ide.len()
        ),
    );
}

#[test]
fn criterion_9_numerical_hygiene() {
    let r = runs();
    let grid = &r.grid;
    let clamps: Vec<usize> = [&r.single, &r.multi, &r.flat, &r.hopf]
        .iter()
        .map(|run| run.trajectory.meta.clamped)
        .collect();

    let preset = &r.single.preset;
    let with_dt = |dt: f64| {
        let mut c = SolverConfig {
            dt,
            ..preset.solver_defaults.clone()
        };
        c.retarget_snapshots(10);
        c
    };
    let (rerun, half, quarter) = std::thread::scope(|s| {
        let rerun = s.spawn(|| simulate(&preset.initial, &preset.params, grid, &preset.solver_defaults).unwrap());
        let half = s.spawn(|| simulate(&preset.initial, &preset.params, grid, &with_dt(5e-3)).unwrap());
        let quarter = s.spawn(|| simulate(&preset.initial, &preset.params, grid, &with_dt(2.5e-3)).unwrap());
        (rerun.join().unwrap(), half.join().unwrap(), quarter.join().unwrap())
    });
    let deterministic = rerun.totals == r.single.trajectory.totals && rerun.snapshots == r.single.trajectory.snapshots;

    let finals = [
        r.single.trajectory.totals.last().unwrap().totals,
        half.totals.last().unwrap().totals,
        quarter.totals.last().unwrap().totals,
    ];
    let change = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max);
    let coarse = change(&finals[0], &finals[1]);
    let fine = change(&finals[1], &finals[2]);
    let ratio = coarse / fine;

    let pass = clamps.iter().all(|&c| c == 0) && deterministic && (1.5..=3.0).contains(&ratio);
    report(
        9,
        "numerical hygiene",
        pass,
        &format!(
            "clamped {clamps:?}, bit-identical rerun {deterministic}, final-state change {coarse:.3e} -> {fine:.3e} (ratio {ratio:.3}, need [1.5, 3])"
        ),
    );
}
