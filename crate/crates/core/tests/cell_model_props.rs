use proptest::prelude::*;

use socest::cell_model::{
    simulate, state_transition, step, terminal_voltage, CellParams, CellParamsTable, CellState, OcvCurve, RcBranch,
};
use socest::presets;

fn params_strategy() -> impl Strategy<Value = CellParams> {
    (
        0.5f64..20.0,
        1e-4f64..0.05,
        1e-4f64..0.02,
        1.0f64..60.0,
        1e-4f64..0.02,
        60.0f64..2000.0,
    )
        .prop_map(|(cap, r0, r1, tau1, r2, tau2)| {
            CellParams::new(
                25.0,
                cap,
                r0,
                RcBranch::new(r1, tau1 / r1),
                RcBranch::new(r2, tau2 / r2),
            )
            .unwrap()
        })
}

fn curve_strategy() -> impl Strategy<Value = OcvCurve> {
    (
        prop::collection::vec(0.001f64..1.0, 0..8),
        prop::collection::vec(0.001f64..0.5, 9),
        2.5f64..3.5,
    )
        .prop_map(|(mut inner, rises, base)| {
            inner.sort_by(f64::total_cmp);
            inner.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            inner.retain(|s| *s < 1.0 - 1e-6);
            let mut socs = vec![0.0];
            socs.extend(inner);
            socs.push(1.0);
            let mut v = base;
            let points = socs
                .into_iter()
                .enumerate()
                .map(|(i, s)| {
                    if i > 0 {
                        v += rises[i - 1];
                    }
                    (s, v)
                })
                .collect();
            OcvCurve::new(points).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn step_is_linear_map(
        p in params_strategy(),
        soc in 0.05f64..0.95,
        u1 in -0.05f64..0.05,
        u2 in -0.05f64..0.05,
        current in -5.0f64..5.0,
        dt in 0.01f64..10.0,
    ) {
        let curve = presets::demo_ocv();
        let state = CellState::new(soc, u1, u2);
        let tr = state_transition(&p, dt).unwrap();
        let (next, v) = step(&p, &curve, &state, current, dt).unwrap();
        let expected = tr.a * state.to_vector() + tr.b * current;
        prop_assert_eq!(next.to_vector(), expected);
        prop_assert_eq!(v, terminal_voltage(&p, &curve, &next, current));
    }

    #[test]
    fn soc_never_leaves_unit_interval(
        p in params_strategy(),
        soc in 0.0f64..=1.0,
        currents in prop::collection::vec(-500.0f64..500.0, 1..20),
    ) {
        let curve = presets::demo_ocv();
        let drive: Vec<(f64, f64)> = currents.iter().map(|&i| (i, 60.0)).collect();
        for point in simulate(&p, &curve, &CellState::at_rest(soc), &drive).unwrap() {
            prop_assert!((0.0..=1.0).contains(&point.state.soc));
        }
    }

    #[test]
    fn rest_voltage_approaches_ocv_monotonically(
        p in params_strategy(),
        soc in 0.05f64..0.95,
        pulse in -20.0f64..20.0,
        pulse_s in 1.0f64..600.0,
    ) {
        let curve = presets::demo_ocv();
        // A state reachable from rest: both branches charged by the same pulse.
        let (loaded, _) = step(&p, &curve, &CellState::at_rest(soc), pulse, pulse_s).unwrap();
        let ocv = curve.voltage(loaded.soc);
        let mut state = loaded;
        let mut gap = (terminal_voltage(&p, &curve, &state, 0.0) - ocv).abs();
        for _ in 0..200 {
            state = step(&p, &curve, &state, 0.0, 5.0).unwrap().0;
            let next_gap = (terminal_voltage(&p, &curve, &state, 0.0) - ocv).abs();
            prop_assert!(next_gap <= gap);
            gap = next_gap;
        }
    }

    #[test]
    fn ocv_monotone_and_slope_signs(curve in curve_strategy(), a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(curve.voltage(lo) <= curve.voltage(hi));
        for s in [lo, hi] {
            let slope = curve.slope(s);
            prop_assert!(slope >= 0.0);
            if s > 0.0 && s < 1.0 {
                prop_assert!(slope > 0.0);
            }
        }
    }

    #[test]
    fn ocv_inverse_round_trips(curve in curve_strategy(), soc in 0.0f64..=1.0) {
        let v = curve.voltage(soc);
        prop_assert!((curve.soc_for_voltage(v) - soc).abs() < 1e-9);
    }

    #[test]
    fn params_at_is_continuous(t in -20.0f64..60.0) {
        let table = presets::demo_params();
        let here = table.params_at(t);
        let near = table.params_at(t + 1e-7);
        for (x, y) in [
            (here.r0_ohm(), near.r0_ohm()),
            (here.r1_ohm(), near.r1_ohm()),
            (here.r2_ohm(), near.r2_ohm()),
            (here.tau1_s(), near.tau1_s()),
            (here.tau2_s(), near.tau2_s()),
        ] {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs());
        }
    }
}

#[test]
fn params_at_exact_at_breakpoints() {
    let table = presets::demo_params();
    for e in table.entries() {
        assert_eq!(table.params_at(e.temp_c()), *e);
    }
}

#[test]
fn table_rejects_bad_temperatures() {
    let p = presets::demo_params().params_at(25.0);
    assert!(CellParamsTable::new("x", vec![]).is_err());
    assert!(CellParamsTable::new("x", vec![p, p]).is_err());
    assert!(CellParamsTable::new("x", vec![p.with_temp(30.0), p.with_temp(10.0)]).is_err());
}

#[test]
fn branches_sorted_by_time_constant() {
    let p = CellParams::new(
        25.0,
        5.0,
        0.01,
        RcBranch::new(0.004, 25_000.0),
        RcBranch::new(0.002, 4000.0),
    )
    .unwrap();
    assert!(p.tau1_s() <= p.tau2_s());
    assert_eq!(p.r1_ohm(), 0.002);
}
