//! Reads a third-party export through a column mapping and reports what
//! the loader rejects.

use socest::data_io::{parse_telemetry, ColumnMapping, CurrentSign};

const EXPORT: &str = "\
Time (s),Current (A),Voltage (V),Temp (C)
0,0,4.101,24.8
1,-5.0,4.082,24.8
2,-5.0,4.079,24.9
3,0,4.095,
";

fn main() {
    let mapping = ColumnMapping {
        time: "Time (s)".into(),
        current: "Current (A)".into(),
        voltage: "Voltage (V)".into(),
        temperature: "Temp (C)".into(),
        sign: CurrentSign::ChargePositive,
    };
    match parse_telemetry(EXPORT.as_bytes(), &mapping, "export.csv") {
        Ok(series) => {
            for s in series.samples() {
                println!(
                    "{:>4} s  {:>5} A  {:?} V  {:?} °C",
                    s.t_s, s.current_a, s.voltage_v, s.temp_c
                );
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }

    let broken = "t_s,current_a,voltage_v\n0,1,3.9\n1,1,3.9\n0.5,1,3.9\n";
    if let Err(e) = parse_telemetry(broken.as_bytes(), &ColumnMapping::default(), "broken.csv") {
        println!("rejected ({}): {e}", e.category().as_str());
    }
}
