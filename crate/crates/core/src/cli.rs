//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 I/O error,
//! 3 numerical failure. Every failure prints one line
//! `error: <category>: <detail>` to standard error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cell_model::{CellModel, CellParamsTable, CellState, OcvCurveSet};
use crate::data_io::{
    self, load_column_mapping, load_ocv, load_params, load_telemetry_with, relabel_io, ColumnMapping,
};
use crate::error::{Error, ErrorCategory, Result};
use crate::estimators::{cc_run, ekf_run, EstimateRow, EstimateTrace, Method, RunOptions};
use crate::experiment::{load_datasets, render_report, run_sweep, EstimatorInit, SweepConfig, SweepMode};
use crate::hppc::{self, drive_from_telemetry, HppcOptions, HppcProtocol};
use crate::presets;
use crate::synthetic::synthesize;

#[derive(Debug, Parser)]
#[command(name = "socest", version, about = "Battery SOC estimation toolkit")]
pub struct Cli {
    /// JSON file overriding defaults for the chosen subcommand
    /// (estimate: estimator init; hppc fit: identification options; sweep: sweep config)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed (overrides the config file)
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the cell under a current profile and write the truth trace (truth.csv)
    Simulate(SimulateArgs),
    /// Estimate SOC from telemetry with Coulomb counting and/or the EKF (estimate.csv)
    Estimate(EstimateArgs),
    /// HPPC profile generation and parameter identification
    #[command(subcommand)]
    Hppc(HppcCommand),
    /// Multi-temperature CC vs EKF comparison (table1.csv, charts, traces)
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Parameter table JSON
    #[arg(long, value_name = "PATH")]
    pub params: PathBuf,
    /// OCV curve JSON
    #[arg(long, value_name = "PATH")]
    pub ocv: PathBuf,
    /// Current profile CSV (telemetry schema; each row's current holds until the next row)
    #[arg(long, value_name = "PATH")]
    pub profile: PathBuf,
    /// Cell temperature in °C
    #[arg(long, default_value_t = 25.0)]
    pub temp: f64,
    /// Initial SOC (cell at rest)
    #[arg(long, default_value_t = 1.0)]
    pub init_soc: f64,
    /// Sampling interval in seconds
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cc,
    Ekf,
    Both,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cc => Method::Cc,
            MethodArg::Ekf => Method::Ekf,
            MethodArg::Both => Method::Both,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Parameter table JSON
    #[arg(long, value_name = "PATH")]
    pub params: PathBuf,
    /// OCV curve JSON
    #[arg(long, value_name = "PATH")]
    pub ocv: PathBuf,
    /// Telemetry CSV
    #[arg(long, value_name = "PATH")]
    pub telemetry: PathBuf,
    /// Estimator(s) to run
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,
    /// Initial SOC for both estimators (default: OCV inversion of the first voltage sample)
    #[arg(long, value_name = "X")]
    pub init_soc: Option<f64>,
    /// Offset added to the initial SOC of both estimators
    #[arg(long, value_name = "D", allow_hyphen_values = true)]
    pub init_offset: Option<f64>,
    /// Temperature for rows without a temp_c value
    #[arg(long, default_value_t = 25.0)]
    pub temp: f64,
    /// Column-mapping JSON for third-party telemetry exports
    #[arg(long, value_name = "PATH")]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum HppcCommand {
    /// Generate an HPPC current profile (hppc_profile.csv)
    Gen(HppcGenArgs),
    /// Identify ECM parameters and the OCV curve from an HPPC run (params.json, ocv.json, fit_report.csv)
    Fit(HppcFitArgs),
}

#[derive(Debug, Args)]
pub struct HppcGenArgs {
    /// Nominal capacity in Ah
    #[arg(long)]
    pub capacity: f64,
    /// Discharge pulse C-rate
    #[arg(long, default_value_t = 1.0)]
    pub discharge_c: f64,
    /// Regeneration pulse C-rate
    #[arg(long, default_value_t = 0.75)]
    pub regen_c: f64,
    /// SOC decrement per stage (must divide 1 evenly)
    #[arg(long, default_value_t = 0.1)]
    pub soc_step: f64,
    /// C-rate of the discharge between stages
    #[arg(long, default_value_t = 1.0)]
    pub step_c: f64,
}

#[derive(Debug, Args)]
pub struct HppcFitArgs {
    /// HPPC telemetry CSV
    #[arg(long, value_name = "PATH")]
    pub telemetry: PathBuf,
    /// Nominal capacity in Ah
    #[arg(long)]
    pub capacity: f64,
    /// Temperature label for the identified parameters
    #[arg(long, default_value_t = 25.0)]
    pub temp: f64,
    /// Column-mapping JSON for third-party telemetry exports
    #[arg(long, value_name = "PATH")]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Directory holding one `<T>.csv` per configured temperature (dataset mode)
    #[arg(long, value_name = "DIR")]
    pub dataset_dir: Option<PathBuf>,
    /// Parameter table JSON (default: built-in demo cell)
    #[arg(long, value_name = "PATH")]
    pub params: Option<PathBuf>,
    /// OCV curve JSON (default: built-in demo cell)
    #[arg(long, value_name = "PATH")]
    pub ocv: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let line = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: config: {line}");
            return ErrorCategory::Config.exit_code();
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            let category = e.category();
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {detail}", category.as_str());
            category.exit_code()
        }
    }
}

/// Runs a parsed command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Estimate(a) => estimate(cli, a),
        Command::Hppc(HppcCommand::Gen(a)) => hppc_gen(cli, a),
        Command::Hppc(HppcCommand::Fit(a)) => hppc_fit(cli, a),
        Command::Sweep(a) => sweep(cli, a),
    }
}

fn read_json_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn mapping(path: Option<&PathBuf>) -> Result<ColumnMapping> {
    match path {
        Some(p) => load_column_mapping(p),
        None => Ok(ColumnMapping::default()),
    }
}

fn load_model(params: &Path, ocv: &Path) -> Result<CellModel> {
    Ok(CellModel::new(load_params(params)?, load_ocv(ocv)?))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let model = load_model(&a.params, &a.ocv)?;
    let profile = load_telemetry_with(&a.profile, &ColumnMapping::default())?;
    let drive = drive_from_telemetry(&profile)?;
    if !(0.0..=1.0).contains(&a.init_soc) {
        return Err(Error::InvalidInput(format!(
            "--init-soc must lie in [0, 1], got {}",
            a.init_soc
        )));
    }
    let (params, curve) = model.at(a.temp);
    let run = synthesize(&params, &curve, a.temp, &CellState::at_rest(a.init_soc), &drive, a.dt)?;
    let path = cli.out.join("truth.csv");
    data_io::write_telemetry_with_extra(create(&path)?, &run.telemetry, &["soc_true", "u1_v", "u2_v"], |i| {
        let s = run.truth[i];
        vec![s.soc, s.u1_v, s.u2_v]
    })
    .map_err(|e| relabel_io(e, &path))?;
    Ok(vec![path])
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<Vec<PathBuf>> {
    let model = load_model(&a.params, &a.ocv)?;
    let mapping = mapping(a.mapping.as_ref())?;
    let series = load_telemetry_with(&a.telemetry, &mapping)?;
    let mut init: EstimatorInit = read_json_config(cli.config.as_deref())?;
    if let Some(d) = a.init_offset {
        init.cc_initial_offset = d;
        init.ekf_initial_offset = d;
    }
    let first = series
        .samples()
        .first()
        .ok_or_else(|| Error::InvalidInput("telemetry is empty".into()))?;
    let base = match a.init_soc {
        Some(x) if (0.0..=1.0).contains(&x) => x,
        Some(x) => return Err(Error::InvalidInput(format!("--init-soc must lie in [0, 1], got {x}"))),
        None => {
            let v = first
                .voltage_v
                .ok_or_else(|| Error::InvalidInput("first sample has no voltage; pass --init-soc".into()))?;
            let (params, curve) = model.at(first.temp_c.unwrap_or(a.temp));
            curve.soc_for_voltage(v + first.current_a * params.r0_ohm())
        }
    };
    let cc_init = (base + init.cc_initial_offset).clamp(0.0, 1.0);
    let truth = data_io::load_column(&a.telemetry, "soc_true")?;
    let method = Method::from(a.method);
    let mut trace = if method == Method::Cc {
        let socs = cc_run(cc_init, &series, model.capacity_ah())?;
        EstimateTrace {
            rows: series
                .samples()
                .iter()
                .zip(socs)
                .map(|(s, soc)| EstimateRow {
                    t_s: s.t_s,
                    soc_cc: soc,
                    soc_ekf: f64::NAN,
                    soc_true: None,
                    v_measured: s.voltage_v.unwrap_or(f64::NAN),
                    v_predicted: f64::NAN,
                    innovation_v: f64::NAN,
                    cov_soc: f64::NAN,
                })
                .collect(),
        }
    } else {
        let belief = init
            .ekf
            .belief(CellState::at_rest((base + init.ekf_initial_offset).clamp(0.0, 1.0)))?;
        let options = RunOptions {
            cc_initial_soc: cc_init,
            default_temp_c: a.temp,
        };
        ekf_run(&belief, &series, &model, &options)?
    };
    if let Some(t) = truth {
        trace.attach_truth(&t)?;
    }
    let path = cli.out.join("estimate.csv");
    trace
        .write_csv(create(&path)?, method)
        .map_err(|e| relabel_io(e, &path))?;
    Ok(vec![path])
}

fn hppc_gen(cli: &Cli, a: &HppcGenArgs) -> Result<Vec<PathBuf>> {
    let protocol = HppcProtocol {
        step_c_rate: a.step_c,
        ..HppcProtocol::new(a.capacity, a.discharge_c, a.regen_c, a.soc_step)
    };
    let profile = protocol.profile()?;
    let path = cli.out.join("hppc_profile.csv");
    data_io::write_telemetry(create(&path)?, &profile.to_telemetry()).map_err(|e| relabel_io(e, &path))?;
    Ok(vec![path])
}

fn hppc_fit(cli: &Cli, a: &HppcFitArgs) -> Result<Vec<PathBuf>> {
    let options: HppcOptions = read_json_config(cli.config.as_deref())?;
    let series = load_telemetry_with(&a.telemetry, &mapping(a.mapping.as_ref())?)?;
    let id = hppc::identify(&series, a.capacity, a.temp, &options)?;
    let table = CellParamsTable::new(
        series.metadata.cell_id.clone().unwrap_or_else(|| "identified".into()),
        vec![id.params],
    )?;
    let params_path = cli.out.join("params.json");
    data_io::save_params(&table, &params_path)?;
    let ocv_path = cli.out.join("ocv.json");
    data_io::save_ocv(&OcvCurveSet::single(a.temp, id.ocv), &ocv_path)?;
    let report_path = cli.out.join("fit_report.csv");
    let mut w = csv::Writer::from_writer(create(&report_path)?);
    for f in &id.features {
        w.serialize(f)
            .map_err(|e| Error::io(&report_path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(&report_path, e))?;
    Ok(vec![params_path, ocv_path, report_path])
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<Vec<PathBuf>> {
    let mut config: SweepConfig = match &cli.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let model = match (&a.params, &a.ocv) {
        (Some(p), Some(o)) => load_model(p, o)?,
        (None, None) => presets::graphene_5ah(),
        (Some(p), None) => CellModel::new(load_params(p)?, presets::demo_ocv_set()),
        (None, Some(o)) => CellModel::new(presets::demo_params(), load_ocv(o)?),
    };
    let datasets = match (&a.dataset_dir, config.mode) {
        (Some(dir), _) => {
            config.mode = SweepMode::Dataset;
            load_datasets(dir, &config)?
        }
        (None, SweepMode::Dataset) => {
            return Err(Error::Config("dataset mode needs --dataset-dir".into()));
        }
        (None, SweepMode::Synthetic) => Vec::new(),
    };
    let report = run_sweep(&config, &model, &datasets)?;
    print!("{}", report.summary());
    render_report(&report, &cli.out)
}
