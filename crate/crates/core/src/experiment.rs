//! Multi-temperature comparison of Coulomb counting and the EKF.
//!
//! A sweep runs both estimators once per configured temperature, either on
//! synthetic telemetry generated from the cell model (with simulator truth)
//! or on user-supplied telemetry (with a Coulomb-counted reference from a
//! known starting SOC), and summarises each run as average SOC and average
//! error per method.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_model::{CellModel, CellState};
use crate::data_io::{load_telemetry_with, ColumnMapping, TelemetrySeries};
use crate::error::{Error, Result};
use crate::estimators::{cc_run, ekf_run, EkfConfig, EstimateTrace, Method, RunOptions};
use crate::synthetic::{stream_rng, synthesize, DriveCycle, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Synthetic,
    Dataset,
}

/// Estimator initialisation relative to the reference starting SOC.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorInit {
    pub cc_initial_offset: f64,
    pub ekf_initial_offset: f64,
    pub ekf: EkfConfig,
}

/// Sweep settings. Every field has a default, so a config file only needs
/// the values it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub temperatures: Vec<f64>,
    pub mode: SweepMode,
    /// Synthetic run length.
    pub duration_s: f64,
    pub sample_dt_s: f64,
    /// True SOC at the start of a synthetic run.
    pub initial_soc: f64,
    pub drive: DriveCycle,
    pub noise: NoiseSpec,
    pub estimators: EstimatorInit,
    pub seed: u64,
    /// Dataset mode: SOC of the reference Coulomb counter at the first sample.
    pub reference_initial_soc: f64,
    pub mapping: ColumnMapping,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            temperatures: vec![0.0, 10.0, 25.0, 40.0],
            mode: SweepMode::Synthetic,
            duration_s: 108_000.0,
            sample_dt_s: 1.0,
            initial_soc: 0.8,
            drive: DriveCycle::default(),
            noise: NoiseSpec::default(),
            estimators: EstimatorInit::default(),
            seed: 0,
            reference_initial_soc: 1.0,
            mapping: ColumnMapping::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    fn validate(&self) -> Result<()> {
        if self.temperatures.is_empty() {
            return Err(Error::Config("temperatures must not be empty".into()));
        }
        if self.temperatures.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("temperatures must be finite".into()));
        }
        for (name, v) in [("duration_s", self.duration_s), ("sample_dt_s", self.sample_dt_s)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.initial_soc) || !(0.0..=1.0).contains(&self.reference_initial_soc) {
            return Err(Error::Config("initial SOC values must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Error summary of one estimate against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorMetrics {
    /// Mean absolute percentage error with a 0.01 SOC floor on the reference.
    pub mape_pct: f64,
    pub rmse_soc: f64,
    pub max_abs_err: f64,
}

/// Error metrics of `estimate` against `truth`.
pub fn metrics(estimate: &[f64], truth: &[f64]) -> Result<ErrorMetrics> {
    if estimate.len() != truth.len() || estimate.is_empty() {
        return Err(Error::InvalidInput(format!(
            "metrics need equal non-empty series, got {} and {}",
            estimate.len(),
            truth.len()
        )));
    }
    let n = estimate.len() as f64;
    let (mut ape, mut sq, mut max) = (0.0, 0.0, 0.0f64);
    for (&e, &t) in estimate.iter().zip(truth) {
        let err = (e - t).abs();
        ape += err / t.max(0.01);
        sq += err * err;
        max = max.max(err);
    }
    Ok(ErrorMetrics {
        mape_pct: ape / n * 100.0,
        rmse_soc: (sq / n).sqrt(),
        max_abs_err: max,
    })
}

/// Metrics for both estimators of a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceMetrics {
    pub cc: ErrorMetrics,
    pub ekf: ErrorMetrics,
}

pub fn error_metrics(trace: &EstimateTrace) -> Result<TraceMetrics> {
    if !trace.has_truth() {
        return Err(Error::MissingTruth);
    }
    let truth: Vec<f64> = trace.rows.iter().map(|r| r.soc_true.unwrap_or(f64::NAN)).collect();
    Ok(TraceMetrics {
        cc: metrics(&trace.soc_cc(), &truth)?,
        ekf: metrics(&trace.soc_ekf(), &truth)?,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Per-temperature summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub temp_c: f64,
    pub avg_soc_cc_pct: f64,
    pub avg_soc_ekf_pct: f64,
    pub avg_soc_true_pct: f64,
    pub cc: ErrorMetrics,
    pub ekf: ErrorMetrics,
}

impl SweepRow {
    pub fn avg_err_cc_pct(&self) -> f64 {
        self.cc.mape_pct
    }
    pub fn avg_err_ekf_pct(&self) -> f64 {
        self.ekf.mape_pct
    }

    /// Summarises a trace with a truth column.
    pub fn from_trace(temp_c: f64, trace: &EstimateTrace) -> Result<Self> {
        let m = error_metrics(trace)?;
        Ok(Self {
            temp_c,
            avg_soc_cc_pct: mean(trace.rows.iter().map(|r| r.soc_cc)) * 100.0,
            avg_soc_ekf_pct: mean(trace.rows.iter().map(|r| r.soc_ekf)) * 100.0,
            avg_soc_true_pct: mean(trace.rows.iter().filter_map(|r| r.soc_true)) * 100.0,
            cc: m.cc,
            ekf: m.ekf,
        })
    }
}

/// One row per configured temperature, plus the underlying traces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub traces: Vec<(f64, EstimateTrace)>,
}

impl SweepReport {
    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>8} | {:>14} | {:>14} | {:>10} | {:>10}",
            "temp", "SOC by CC", "SOC by EKF", "err CC", "err EKF"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>8} | {:>13.4}% | {:>13.4}% | {:>9.4}% | {:>9.4}%",
                format!("{} °C", r.temp_c),
                r.avg_soc_cc_pct,
                r.avg_soc_ekf_pct,
                r.avg_err_cc_pct(),
                r.avg_err_ekf_pct()
            );
        }
        s
    }
}

fn estimate_one(
    config: &SweepConfig,
    model: &CellModel,
    temp_c: f64,
    dataset: Option<&TelemetrySeries>,
) -> Result<EstimateTrace> {
    let est = &config.estimators;
    let (telemetry, truth, reference_soc) = match config.mode {
        SweepMode::Synthetic => {
            let (params, curve) = model.at(temp_c);
            let drive = config.drive.segments(model.capacity_ah(), config.duration_s)?;
            let run = synthesize(
                &params,
                &curve,
                temp_c,
                &CellState::at_rest(config.initial_soc),
                &drive,
                config.sample_dt_s,
            )?;
            let noisy = config
                .noise
                .apply(&run.telemetry, &mut stream_rng(config.seed, temp_c))?;
            (noisy, run.true_soc(), config.initial_soc)
        }
        SweepMode::Dataset => {
            let series = dataset.ok_or_else(|| Error::Config(format!("no dataset for {temp_c} °C")))?;
            let reference = cc_run(config.reference_initial_soc, series, model.capacity_ah())?;
            (series.clone(), reference, config.reference_initial_soc)
        }
    };
    let options = RunOptions {
        cc_initial_soc: (reference_soc + est.cc_initial_offset).clamp(0.0, 1.0),
        default_temp_c: temp_c,
    };
    let belief = est.ekf.belief(CellState::at_rest(
        (reference_soc + est.ekf_initial_offset).clamp(0.0, 1.0),
    ))?;
    let mut trace = ekf_run(&belief, &telemetry, model, &options)?;
    trace.attach_truth(&truth)?;
    Ok(trace)
}

/// Runs the sweep. Temperatures are processed in parallel; each run's noise
/// stream depends only on `(seed, temperature)`, so results do not depend on
/// scheduling.
///
/// In dataset mode `datasets` must hold one series per configured
/// temperature.
pub fn run_sweep(config: &SweepConfig, model: &CellModel, datasets: &[(f64, TelemetrySeries)]) -> Result<SweepReport> {
    config.validate()?;
    if config.mode == SweepMode::Dataset {
        for t in &config.temperatures {
            if !datasets.iter().any(|(dt, _)| dt == t) {
                return Err(Error::Config(format!(
                    "missing dataset for configured temperature {t} °C"
                )));
            }
        }
    }
    let results = config
        .temperatures
        .par_iter()
        .map(|&t| {
            let dataset = datasets.iter().find(|(dt, _)| *dt == t).map(|(_, s)| s);
            let trace = estimate_one(config, model, t, dataset)?;
            let row = SweepRow::from_trace(t, &trace)?;
            Ok((row, (t, trace)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, traces) = results.into_iter().unzip();
    Ok(SweepReport { rows, traces })
}

/// Conventional file name of the dataset for `temp_c` inside a directory.
pub fn dataset_file_name(temp_c: f64) -> String {
    format!("{temp_c}.csv")
}

/// Loads `<dir>/<T>.csv` for each configured temperature. A missing file is
/// a configuration error.
pub fn load_datasets(dir: impl AsRef<Path>, config: &SweepConfig) -> Result<Vec<(f64, TelemetrySeries)>> {
    let dir = dir.as_ref();
    config
        .temperatures
        .iter()
        .map(|&t| {
            let path = dir.join(dataset_file_name(t));
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "missing dataset for configured temperature {t} °C (expected {})",
                    path.display()
                )));
            }
            load_telemetry_with(&path, &config.mapping).map(|s| (t, s))
        })
        .collect()
}

fn fmt_temp(t: f64) -> String {
    format!("{t} °C")
}

/// Table of average SOC per method, one row per temperature.
pub fn table1_csv(report: &SweepReport) -> String {
    let mut s = String::from("temperature,soc_by_cc_method,soc_by_ekf_method\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{:.4}%,{:.4}%",
            fmt_temp(r.temp_c),
            r.avg_soc_cc_pct,
            r.avg_soc_ekf_pct
        );
    }
    s
}

/// Numeric error summary, one row per temperature.
pub fn errors_csv(report: &SweepReport) -> String {
    let mut s = String::from(
        "temp_c,avg_soc_true_pct,avg_err_cc_pct,avg_err_ekf_pct,rmse_cc,rmse_ekf,max_abs_err_cc,max_abs_err_ekf\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.8},{:.8},{:.8},{:.8}",
            r.temp_c,
            r.avg_soc_true_pct,
            r.cc.mape_pct,
            r.ekf.mape_pct,
            r.cc.rmse_soc,
            r.ekf.rmse_soc,
            r.cc.max_abs_err,
            r.ekf.max_abs_err
        );
    }
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bar chart as standalone SVG markup.
pub fn grouped_bar_svg(title: &str, y_label: &str, categories: &[String], series: &[(&str, &str, Vec<f64>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 50.0;
    const BOTTOM: f64 = 60.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let max_v = series
        .iter()
        .flat_map(|s| s.2.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let y_max = nice_ceiling(max_v);
    let y = |v: f64| TOP + plot_h * (1.0 - (v / y_max).clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15" font-weight="bold">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    // y axis, ticks and grid
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#dddddd"/>"##,
            W - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + plot_h,
        W - RIGHT,
        TOP + plot_h
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        xml_escape(y_label)
    );
    // bars
    let groups = categories.len().max(1) as f64;
    let group_w = plot_w / groups;
    let bar_w = group_w * 0.7 / series.len().max(1) as f64;
    for (gi, cat) in categories.iter().enumerate() {
        let gx = LEFT + group_w * gi as f64 + group_w * 0.15;
        for (si, (_, color, values)) in series.iter().enumerate() {
            let v = values.get(gi).copied().unwrap_or(0.0);
            let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
            let top = y(v);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{top:.1}" width="{bar_w:.1}" height="{:.1}" fill="{color}"/>"#,
                gx + bar_w * si as f64,
                TOP + plot_h - top
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + group_w * (gi as f64 + 0.5),
            TOP + plot_h + 18.0,
            xml_escape(cat)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Temperature</text>"#,
        LEFT + plot_w / 2.0,
        H - 14.0
    );
    // legend
    for (si, (name, color, _)) in series.iter().enumerate() {
        let lx = W - RIGHT - 130.0;
        let ly = TOP + 4.0 + 18.0 * si as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.1}" y="{ly:.1}" width="12" height="12" fill="{color}"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            ly + 10.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn nice_ceiling(v: f64) -> f64 {
    if v.is_nan() || v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= v {
            return m * mag;
        }
    }
    10.0 * mag
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

const CC_COLOR: &str = "#4472c4";
const EKF_COLOR: &str = "#ed7d31";

pub fn soc_chart_svg(report: &SweepReport) -> String {
    let cats: Vec<String> = report.rows.iter().map(|r| fmt_temp(r.temp_c)).collect();
    grouped_bar_svg(
        "% SOC at different temperatures",
        "Average SOC (%)",
        &cats,
        &[
            ("CC", CC_COLOR, report.rows.iter().map(|r| r.avg_soc_cc_pct).collect()),
            (
                "EKF",
                EKF_COLOR,
                report.rows.iter().map(|r| r.avg_soc_ekf_pct).collect(),
            ),
        ],
    )
}

pub fn error_chart_svg(report: &SweepReport) -> String {
    let cats: Vec<String> = report.rows.iter().map(|r| fmt_temp(r.temp_c)).collect();
    grouped_bar_svg(
        "% error in estimated SOC at different temperatures",
        "Average error (%)",
        &cats,
        &[
            ("CC", CC_COLOR, report.rows.iter().map(|r| r.avg_err_cc_pct()).collect()),
            (
                "EKF",
                EKF_COLOR,
                report.rows.iter().map(|r| r.avg_err_ekf_pct()).collect(),
            ),
        ],
    )
}

/// Writes `table1.csv`, `errors.csv`, `soc_vs_temp.svg`, `err_vs_temp.svg`
/// and one `trace_<T>.csv` per trace into `out_dir` (created if needed).
/// Returns the written paths.
pub fn render_report(report: &SweepReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put("table1.csv".into(), table1_csv(report).as_bytes())?;
    put("errors.csv".into(), errors_csv(report).as_bytes())?;
    put("soc_vs_temp.svg".into(), soc_chart_svg(report).as_bytes())?;
    put("err_vs_temp.svg".into(), error_chart_svg(report).as_bytes())?;
    for (t, trace) in &report.traces {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf, Method::Both)?;
        put(format!("trace_{t}.csv"), &buf)?;
    }
    Ok(written)
}
