use proptest::prelude::*;

use socest::cell_model::{CellParams, CellState, RcBranch};
use socest::hppc::{self, fit_relaxation, generate_profile, identify, HppcOptions, PulseInfo, SegmentLabel};
use socest::presets;
use socest::synthetic::synthesize;

#[test]
fn identifies_every_demo_temperature() {
    let model = presets::graphene_5ah();
    let profile = generate_profile(model.capacity_ah(), 1.0, 0.75, 0.1).unwrap();
    for temp in presets::DEMO_TEMPERATURES_C {
        let (truth, curve) = model.at(temp);
        let run = synthesize(&truth, &curve, temp, &CellState::at_rest(1.0), &profile.drive(), 0.1).unwrap();
        let id = identify(&run.telemetry, model.capacity_ah(), temp, &HppcOptions::default()).unwrap();
        let p = id.params;
        for (got, want) in [
            (p.r0_ohm(), truth.r0_ohm()),
            (p.r1_ohm(), truth.r1_ohm()),
            (p.tau1_s(), truth.tau1_s()),
            (p.r2_ohm(), truth.r2_ohm()),
            (p.tau2_s(), truth.tau2_s()),
        ] {
            assert!((got - want).abs() <= 0.05 * want, "{temp} °C: {got} vs {want}");
        }
        for &(s, v) in id.ocv.points() {
            assert!((v - curve.voltage(s)).abs() < 2e-3, "{temp} °C OCV at {s}");
        }
        assert!(id
            .features
            .iter()
            .all(|f| f.fit_residual_v >= 0.0 && f.r1_ohm > 0.0 && f.c2_farad > 0.0));
    }
}

#[test]
fn identifies_with_one_hertz_sampling() {
    let model = presets::graphene_5ah();
    let (truth, curve) = model.at(25.0);
    let profile = generate_profile(5.0, 1.0, 0.75, 0.1).unwrap();
    let run = synthesize(&truth, &curve, 25.0, &CellState::at_rest(1.0), &profile.drive(), 1.0).unwrap();
    let id = identify(&run.telemetry, 5.0, 25.0, &HppcOptions::default()).unwrap();
    assert!((id.params.r0_ohm() - truth.r0_ohm()).abs() <= 0.05 * truth.r0_ohm());
    assert!((id.params.tau2_s() - truth.tau2_s()).abs() <= 0.05 * truth.tau2_s());
}

#[test]
fn identify_r0_needs_an_edge() {
    let model = presets::graphene_5ah();
    let (p, c) = model.at(25.0);
    let run = synthesize(&p, &c, 25.0, &CellState::at_rest(0.5), &[(0.0, 30.0)], 1.0).unwrap();
    assert!(matches!(
        hppc::identify_r0(&run.telemetry),
        Err(socest::Error::NoStep { .. })
    ));
}

fn relaxation_case(r1: f64, tau1: f64, r2: f64, tau2: f64, current: f64) -> (CellParams, socest::TelemetrySeries) {
    let p = CellParams::new(
        25.0,
        5.0,
        0.005,
        RcBranch::new(r1, tau1 / r1),
        RcBranch::new(r2, tau2 / r2),
    )
    .unwrap();
    let run = synthesize(
        &p,
        &presets::demo_ocv(),
        25.0,
        &CellState::at_rest(0.5),
        &[(current, 10.0), (0.0, 600.0)],
        0.1,
    )
    .unwrap();
    let relax = run.telemetry.slice(100..run.telemetry.len());
    (p, relax)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relaxation_fit_cost_never_increases(
        r1 in 0.001f64..0.005,
        tau1 in 3.0f64..15.0,
        r2 in 0.002f64..0.008,
        ratio in 6.0f64..20.0,
        current in prop_oneof![2.0f64..10.0, -10.0f64..-2.0],
    ) {
        let (p, relax) = relaxation_case(r1, tau1, r2, tau1 * ratio, current);
        let fit = fit_relaxation(&relax, &PulseInfo { current_a: current, duration_s: 10.0 }, None).unwrap();
        prop_assert!(fit.cost_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!((fit.tau1_s - p.tau1_s()).abs() <= 0.05 * p.tau1_s());
        prop_assert!((fit.tau2_s - p.tau2_s()).abs() <= 0.05 * p.tau2_s());
        prop_assert!((fit.r1_ohm - p.r1_ohm()).abs() <= 0.05 * p.r1_ohm());
        prop_assert!((fit.r2_ohm - p.r2_ohm()).abs() <= 0.05 * p.r2_ohm());
    }

    #[test]
    fn profile_net_charge_and_rests(
        cap in 0.5f64..50.0,
        discharge in 0.2f64..2.0,
        regen in 0.2f64..2.0,
        divisions in prop::sample::select(vec![2usize, 4, 5, 8, 10, 20]),
    ) {
        let step = 1.0 / divisions as f64;
        let profile = generate_profile(cap, discharge, regen, step).unwrap();
        let net = profile.net_charge_as() / (cap * 3600.0);
        prop_assert!((net - 1.0).abs() <= 1e-9);
        for s in profile.segments() {
            prop_assert!(s.duration_s > 0.0);
            if s.label == SegmentLabel::Rest {
                prop_assert_eq!(s.current_a, 0.0);
            }
        }
    }
}
