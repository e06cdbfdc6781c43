//! EKF against Coulomb counting on noisy synthetic telemetry with a wrong
//! initial SOC.

use socest::cell_model::CellState;
use socest::estimators::{ekf_run, EkfConfig, RunOptions};
use socest::experiment::error_metrics;
use socest::presets;
use socest::synthetic::{stream_rng, synthesize, DriveCycle, NoiseSpec};

fn main() -> socest::Result<()> {
    let model = presets::graphene_5ah();
    let temp = 10.0;
    let (params, curve) = model.at(temp);
    let drive = DriveCycle::default().segments(model.capacity_ah(), 10.0 * 3600.0)?;
    let run = synthesize(&params, &curve, temp, &CellState::at_rest(0.8), &drive, 1.0)?;
    let noise = NoiseSpec {
        current_sigma_a: 0.02,
        voltage_sigma_v: 0.005,
    };
    let telemetry = noise.apply(&run.telemetry, &mut stream_rng(1, temp))?;

    let wrong = 0.6;
    let belief = EkfConfig::default().belief(CellState::at_rest(wrong))?;
    let options = RunOptions {
        cc_initial_soc: wrong,
        default_temp_c: temp,
    };
    let mut trace = ekf_run(&belief, &telemetry, &model, &options)?;
    trace.attach_truth(&run.true_soc())?;

    println!("{:>7} {:>7} {:>7} {:>7} {:>10}", "t_h", "true", "cc", "ekf", "var_soc");
    for r in trace.rows.iter().step_by(3600) {
        println!(
            "{:>7.1} {:>7.4} {:>7.4} {:>7.4} {:>10.3e}",
            r.t_s / 3600.0,
            r.soc_true.unwrap_or(f64::NAN),
            r.soc_cc,
            r.soc_ekf,
            r.cov_soc
        );
    }
    let m = error_metrics(&trace)?;
    println!("CC  rmse {:.4}  mape {:.2}%", m.cc.rmse_soc, m.cc.mape_pct);
    println!("EKF rmse {:.4}  mape {:.2}%", m.ekf.rmse_soc, m.ekf.mape_pct);
    Ok(())
}
