//! Four-temperature CC vs EKF comparison written to a report directory.
//!
//! Usage: `cargo run --example temperature_sweep [OUT_DIR]`

use socest::experiment::{render_report, run_sweep, SweepConfig};
use socest::presets;
use socest::synthetic::NoiseSpec;

fn main() -> socest::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep_report".into());
    let mut config = SweepConfig {
        noise: NoiseSpec {
            current_sigma_a: 0.02,
            voltage_sigma_v: 0.005,
        },
        seed: 7,
        ..SweepConfig::default()
    };
    config.estimators.cc_initial_offset = -0.1;
    config.estimators.ekf_initial_offset = -0.1;

    let report = run_sweep(&config, &presets::graphene_5ah(), &[])?;
    print!("{}", report.summary());
    for path in render_report(&report, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
