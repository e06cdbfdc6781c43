//! Drives the demo cell through a discharge pulse and a rest, printing the
//! terminal voltage as the RC branches charge and relax.

use socest::cell_model::{simulate, CellState};
use socest::presets;

fn main() -> socest::Result<()> {
    let model = presets::graphene_5ah();
    let (params, curve) = model.at(25.0);
    println!(
        "R0 {:.4} ohm, tau1 {:.1} s, tau2 {:.1} s",
        params.r0_ohm(),
        params.tau1_s(),
        params.tau2_s()
    );

    // 1C discharge for 60 s, then 5 minutes of rest, in 10 s steps.
    let mut drive = vec![(5.0, 10.0); 6];
    drive.extend(vec![(0.0, 10.0); 30]);
    let trace = simulate(&params, &curve, &CellState::at_rest(0.8), &drive)?;

    println!("{:>6} {:>8} {:>9} {:>9} {:>9}", "t_s", "soc", "u1_v", "u2_v", "v_term");
    for p in trace.iter().step_by(3) {
        println!(
            "{:>6.0} {:>8.5} {:>9.5} {:>9.5} {:>9.5}",
            p.t_s, p.state.soc, p.state.u1_v, p.state.u2_v, p.terminal_v
        );
    }
    Ok(())
}
