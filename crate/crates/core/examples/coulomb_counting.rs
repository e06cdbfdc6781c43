//! Coulomb counting is exact when it starts from the right SOC and never
//! corrects a wrong start.

use socest::cell_model::CellState;
use socest::estimators::cc_run;
use socest::presets;
use socest::synthetic::{synthesize, DriveCycle};

fn main() -> socest::Result<()> {
    let model = presets::graphene_5ah();
    let (params, curve) = model.at(25.0);
    let drive = DriveCycle::default().segments(model.capacity_ah(), 6.0 * 3600.0)?;
    let run = synthesize(&params, &curve, 25.0, &CellState::at_rest(0.9), &drive, 1.0)?;
    let truth = run.true_soc();

    for start in [0.9, 0.8, 0.7] {
        let soc = cc_run(start, &run.telemetry, model.capacity_ah())?;
        let mae = soc.iter().zip(&truth).map(|(e, t)| (e - t).abs()).sum::<f64>() / truth.len() as f64;
        println!(
            "start {start:.2}: final {:.4} (true {:.4}), mean abs error {mae:.4}",
            soc.last().unwrap(),
            truth.last().unwrap()
        );
    }
    Ok(())
}
