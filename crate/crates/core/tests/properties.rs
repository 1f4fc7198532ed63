use clonesel_core::analysis::window_fraction;
use clonesel_core::{
    differentiation_outflux, euler_step, feedback_signal, ide_to_ode, net_growth, ode_rhs, rhs, Grid, ModelParams,
    OdeParams, OdeState, RateFunction, RateTable, State,
};
use proptest::prelude::*;

const K: f64 = 1.75e-9;

/// Valid rate tables: a_1 in (0.6, 0.99), later stages strictly below it.
fn model(grid: &Grid, a1: &[f64], shrink: f64, p: &[f64], d: f64) -> ModelParams {
    let a1_table = RateTable::new(a1.to_vec());
    let a2_table = RateTable::new(a1.iter().map(|a| 0.5 + shrink * (a - 0.5)).collect());
    let p1 = RateTable::new(p.to_vec());
    let p2 = RateTable::new(p.iter().map(|v| (v * 1.5).min(0.99)).collect());
    assert_eq!(a1.len(), grid.num_points());
    ModelParams::new(vec![a1_table, a2_table], vec![p1, p2], K, d).unwrap()
}

fn densities(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1e10f64, n), 3)
}

const N: usize = 12;

prop_compose! {
    fn params_and_state()(
        a1 in prop::collection::vec(0.6..0.99f64, N),
        shrink in 0.1..0.95f64,
        p in prop::collection::vec(0.01..0.6f64, N),
        d in 0.05..2.0f64,
        n in densities(N),
    ) -> (ModelParams, State) {
        let grid = Grid::midpoint(N).unwrap();
        (model(&grid, &a1, shrink, &p, d), State::new(0.0, n).unwrap())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn euler_keeps_densities_non_negative((params, state) in params_and_state(), steps in 1usize..50) {
        let grid = Grid::midpoint(N).unwrap();
        let dt = 0.5 / params.max_rate_bound();
        let mut s = state;
        for _ in 0..steps {
            s = euler_step(&s, &params, &grid, dt).unwrap();
        }
        prop_assert!(s.densities().as_slice().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn division_splits_into_growth_and_outflux(
        (params, _) in params_and_state(),
        rho in 0.0..1e12f64,
        k in 0..N,
        stage in 0usize..2,
    ) {
        // 2 p n = (P + p) n + Q n: each division either keeps or passes on.
        let s = feedback_signal(rho, K).unwrap();
        let p = params.proliferation(stage).values()[k];
        let total = net_growth(stage, k, s, &params).unwrap() + differentiation_outflux(stage, k, s, &params).unwrap();
        prop_assert!((total - p).abs() <= 1e-15 * p.max(1.0) * 4.0);
    }

    #[test]
    fn signal_decreases_with_mature_density(a in 0.0..1e12f64, b in 0.0..1e12f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let s_lo = feedback_signal(lo, K).unwrap();
        let s_hi = feedback_signal(hi, K).unwrap();
        prop_assert!(s_hi <= s_lo);
        prop_assert!(s_hi > 0.0 && s_lo <= 1.0);
    }

    #[test]
    fn stage_sum_of_rhs((params, state) in params_and_state()) {
        // Summed over stages, only divisions and clearance remain.
        let grid = Grid::midpoint(N).unwrap();
        let d = rhs(&state, &params, &grid).unwrap();
        for k in 0..N {
            let lhs: f64 = (0..3).map(|i| d.stage(i)[k]).sum();
            let births: f64 = (0..2).map(|i| params.proliferation(i).values()[k] * state.stage(i)[k]).sum();
            let rhs_k = births - params.clearance() * state.stage(2)[k];
            let scale: f64 = (0..3).map(|i| d.stage(i)[k].abs()).sum::<f64>() + births;
            prop_assert!((lhs - rhs_k).abs() <= 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn bridged_rhs_matches_per_cell((params, state) in params_and_state()) {
        let grid = Grid::midpoint(N).unwrap();
        let d = rhs(&state, &params, &grid).unwrap();
        let (os, op) = ide_to_ode(&state, &params, &grid).unwrap();
        let od = ode_rhs(&os, &op).unwrap();
        let w = grid.cell_width();
        // Entries may cancel, so compare against the size of the state.
        let scale = os.counts().max_norm();
        for (a, b) in d.as_slice().iter().zip(od.as_slice()) {
            prop_assert!((a * w - b).abs() <= 1e-14 * scale);
        }
    }

    #[test]
    fn permuting_clones_permutes_derivative(
        (params, state) in params_and_state(),
        perm in Just((0..N).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let grid = Grid::midpoint(N).unwrap();
        let (os, op) = ide_to_ode(&state, &params, &grid).unwrap();
        let permute = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.into_iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect()
        };
        let rows = |f: &dyn Fn(usize) -> Vec<f64>, m: usize| (0..m).map(f).collect::<Vec<_>>();
        let pp = OdeParams::new(
            permute(rows(&|i| op.self_renewal(i).to_vec(), 2)),
            permute(rows(&|i| op.proliferation(i).to_vec(), 2)),
            op.feedback_strength(),
            op.clearance(),
        ).unwrap();
        let ps = OdeState::new(0.0, permute(rows(&|i| os.stage(i).to_vec(), 3))).unwrap();
        let d = ode_rhs(&os, &op).unwrap();
        let dp = ode_rhs(&ps, &pp).unwrap();
        for i in 0..3 {
            for (new_j, &old_j) in perm.iter().enumerate() {
                let (a, b) = (d.stage(i)[old_j], dp.stage(i)[new_j]);
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn window_fraction_is_a_fraction(values in prop::collection::vec(0.0..1e9f64, 40), c in 0.0..1.0f64, h in 0.0..0.6f64) {
        let grid = Grid::midpoint(40).unwrap();
        let f = window_fraction(&values, &grid, c, h);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(window_fraction(&values, &grid, c, 1.0) >= f);
    }

    #[test]
    fn rate_function_text_round_trips(
        scale in -10.0..10.0f64,
        amp in -1.0..1.0f64,
        center in 0.0..1.0f64,
        width in 1e-4..20.0f64,
        offset in -1.0..1.0f64,
        centers in prop::collection::vec(0.0..1.0f64, 1..6),
    ) {
        let fs = [
            RateFunction::Constant(offset),
            RateFunction::Linear { intercept: offset, slope: scale },
            RateFunction::Gaussian { scale, amplitude: amp, center, width, offset },
            RateFunction::Bumps { base: offset, amplitude: amp, width, centers },
        ];
        for f in fs {
            let back: RateFunction = f.to_string().parse().unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
