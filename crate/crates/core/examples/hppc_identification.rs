//! Generates an HPPC profile, runs it through the demo cell at 10 Hz and
//! identifies the model back from the telemetry.

use socest::cell_model::CellState;
use socest::hppc::{generate_profile, identify, HppcOptions};
use socest::presets;
use socest::synthetic::synthesize;

fn main() -> socest::Result<()> {
    let model = presets::graphene_5ah();
    let temp = 0.0;
    let (truth, curve) = model.at(temp);
    let profile = generate_profile(model.capacity_ah(), 1.0, 0.75, 0.1)?;
    println!(
        "profile: {} segments, {:.1} h",
        profile.segments().len(),
        profile.duration_s() / 3600.0
    );

    let run = synthesize(&truth, &curve, temp, &CellState::at_rest(1.0), &profile.drive(), 0.1)?;
    let id = identify(&run.telemetry, model.capacity_ah(), temp, &HppcOptions::default())?;

    println!(
        "{:>5} {:>8} {:>8} {:>7} {:>8} {:>7} {:>9}",
        "soc", "r0", "r1", "tau1", "r2", "tau2", "rms_v"
    );
    for f in &id.features {
        println!(
            "{:>5.2} {:>8.5} {:>8.5} {:>7.2} {:>8.5} {:>7.1} {:>9.2e}",
            f.soc_level,
            f.r0_ohm,
            f.r1_ohm,
            f.r1_ohm * f.c1_farad,
            f.r2_ohm,
            f.r2_ohm * f.c2_farad,
            f.fit_residual_v
        );
    }
    let p = id.params;
    println!(
        "identified: R0 {:.5} R1 {:.5} tau1 {:.2} R2 {:.5} tau2 {:.1}",
        p.r0_ohm(),
        p.r1_ohm(),
        p.tau1_s(),
        p.r2_ohm(),
        p.tau2_s()
    );
    println!(
        "truth:      R0 {:.5} R1 {:.5} tau1 {:.2} R2 {:.5} tau2 {:.1}",
        truth.r0_ohm(),
        truth.r1_ohm(),
        truth.tau1_s(),
        truth.r2_ohm(),
        truth.tau2_s()
    );
    for &(s, v) in id.ocv.points() {
        println!("ocv {s:.3} -> {v:.4} V (true {:.4} V)", curve.voltage(s));
    }
    Ok(())
}
