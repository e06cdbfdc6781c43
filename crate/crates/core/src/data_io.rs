//! File formats: telemetry CSV and the parameter / OCV JSON documents.
//!
//! Telemetry CSV uses the header `t_s,current_a,voltage_v,temp_c`. Current is
//! discharge-positive. `voltage_v` and `temp_c` cells may be empty. Extra
//! columns are ignored on read, so a simulated truth trace can be fed back
//! in as telemetry.
//!
//! Every parser here is total: arbitrary input yields either a valid value
//! or a structured [`Error`].

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cell_model::{CellParams, CellParamsTable, OcvCurve, OcvCurveSet, RcBranch};
use crate::error::{Error, Result};

/// One telemetry sample. The current is held until the next sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t_s: f64,
    pub current_a: f64,
    pub voltage_v: Option<f64>,
    pub temp_c: Option<f64>,
}

impl Sample {
    pub fn new(t_s: f64, current_a: f64, voltage_v: Option<f64>, temp_c: Option<f64>) -> Self {
        Self {
            t_s,
            current_a,
            voltage_v,
            temp_c,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesMetadata {
    pub source: String,
    pub cell_id: Option<String>,
    pub capacity_ah: Option<f64>,
}

/// Timestamped current / voltage / temperature samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySeries {
    samples: Vec<Sample>,
    pub metadata: SeriesMetadata,
}

impl TelemetrySeries {
    /// Validates strictly increasing time, finite values and positive voltage.
    /// Error rows are 1-based sample indices.
    pub fn new(samples: Vec<Sample>, metadata: SeriesMetadata) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            validate_sample(i + 1, s)?;
            if i > 0 && s.t_s <= samples[i - 1].t_s {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!(
                        "time must be strictly increasing ({} after {})",
                        s.t_s,
                        samples[i - 1].t_s
                    ),
                });
            }
        }
        Ok(Self { samples, metadata })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sub-series over the index range, keeping metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TelemetrySeries {
        TelemetrySeries {
            samples: self.samples[range].to_vec(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t_s - a.t_s,
            _ => 0.0,
        }
    }
}

fn validate_sample(row: usize, s: &Sample) -> Result<()> {
    let bad = |message: String| Err(Error::Parse { row, message });
    if !s.t_s.is_finite() {
        return bad(format!("t_s must be finite, got {}", s.t_s));
    }
    if !s.current_a.is_finite() {
        return bad(format!("current_a must be finite, got {}", s.current_a));
    }
    if let Some(v) = s.voltage_v {
        if !v.is_finite() || v <= 0.0 {
            return bad(format!("voltage_v must be finite and positive, got {v}"));
        }
    }
    if let Some(t) = s.temp_c {
        if !t.is_finite() {
            return bad(format!("temp_c must be finite, got {t}"));
        }
    }
    Ok(())
}

/// Sign convention of the current column in a source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurrentSign {
    #[default]
    DischargePositive,
    ChargePositive,
}

/// Adapts third-party exports to the telemetry schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub time: String,
    pub current: String,
    pub voltage: String,
    pub temperature: String,
    pub sign: CurrentSign,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            time: "t_s".into(),
            current: "current_a".into(),
            voltage: "voltage_v".into(),
            temperature: "temp_c".into(),
            sign: CurrentSign::DischargePositive,
        }
    }
}

pub fn load_column_mapping(path: impl AsRef<Path>) -> Result<ColumnMapping> {
    let bytes = read_file(path.as_ref())?;
    serde_json::from_slice(&bytes).map_err(|e| json_error(&e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn parse_number(row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("column `{column}`: cannot parse `{raw}` as a number"),
    })
}

fn parse_optional(row: usize, column: &str, raw: Option<&str>) -> Result<Option<f64>> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => parse_number(row, column, s).map(Some),
    }
}

/// Parses telemetry CSV from any reader.
pub fn parse_telemetry<R: Read>(reader: R, mapping: &ColumnMapping, source: &str) -> Result<TelemetrySeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| Error::Parse {
        row: 0,
        message: format!("missing column `{name}`"),
    };
    let t_col = find(&mapping.time).ok_or_else(|| missing(&mapping.time))?;
    let i_col = find(&mapping.current).ok_or_else(|| missing(&mapping.current))?;
    let v_col = find(&mapping.voltage).ok_or_else(|| missing(&mapping.voltage))?;
    let temp_col = find(&mapping.temperature);

    let mut samples: Vec<Sample> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let t_s = parse_number(row, &mapping.time, field(t_col))?;
        let mut current_a = parse_number(row, &mapping.current, field(i_col))?;
        if mapping.sign == CurrentSign::ChargePositive && current_a != 0.0 {
            current_a = -current_a;
        }
        let voltage_v = parse_optional(row, &mapping.voltage, record.get(v_col))?;
        let temp_c = match temp_col {
            Some(c) => parse_optional(row, &mapping.temperature, record.get(c))?,
            None => None,
        };
        let sample = Sample::new(t_s, current_a, voltage_v, temp_c);
        validate_sample(row, &sample)?;
        if let Some(prev) = samples.last() {
            if sample.t_s <= prev.t_s {
                return Err(Error::Parse {
                    row,
                    message: format!("time must be strictly increasing ({} after {})", sample.t_s, prev.t_s),
                });
            }
        }
        samples.push(sample);
    }
    TelemetrySeries::new(
        samples,
        SeriesMetadata {
            source: source.to_string(),
            ..Default::default()
        },
    )
}

/// Loads a telemetry CSV file using the default column names.
pub fn load_telemetry(path: impl AsRef<Path>) -> Result<TelemetrySeries> {
    load_telemetry_with(path, &ColumnMapping::default())
}

pub fn load_telemetry_with(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<TelemetrySeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_telemetry(file, mapping, &path.display().to_string())
}

/// Reads one numeric column by header name. Returns `None` when the column
/// is absent. Every row must hold a number.
pub fn load_column(path: impl AsRef<Path>, name: &str) -> Result<Option<Vec<f64>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let Some(col) = headers.iter().position(|h| h.trim() == name) else {
        return Ok(None);
    };
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        out.push(parse_number(row, name, record.get(col).unwrap_or(""))?);
    }
    Ok(Some(out))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes telemetry in the canonical schema. Extra per-row columns can be
/// appended with [`write_telemetry_with_extra`].
pub fn write_telemetry<W: Write>(out: W, series: &TelemetrySeries) -> Result<()> {
    write_telemetry_with_extra(out, series, &[], |_| Vec::new())
}

pub fn write_telemetry_with_extra<W: Write>(
    out: W,
    series: &TelemetrySeries,
    extra_headers: &[&str],
    extra: impl Fn(usize) -> Vec<f64>,
) -> Result<()> {
    let mut w = BufWriter::new(out);
    let mut header = String::from("t_s,current_a,voltage_v,temp_c");
    for h in extra_headers {
        header.push(',');
        header.push_str(h);
    }
    let io = |e| Error::io("<output>", e);
    writeln!(w, "{header}").map_err(io)?;
    for (i, s) in series.samples().iter().enumerate() {
        write!(
            w,
            "{},{},{},{}",
            s.t_s,
            s.current_a,
            fmt_opt(s.voltage_v),
            fmt_opt(s.temp_c)
        )
        .map_err(io)?;
        for x in extra(i) {
            write!(w, ",{x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_telemetry(series: &TelemetrySeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_telemetry(file, series).map_err(|e| relabel_io(e, path))
}

pub(crate) fn relabel_io(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

fn json_error(e: &serde_json::Error) -> Error {
    Error::validation("$", format!("line {} column {}: {e}", e.line(), e.column()))
}

fn prefix(e: Error, prefix: &str) -> Error {
    match e {
        Error::Validation { path, message } => Error::Validation {
            path: format!("{prefix}.{path}"),
            message,
        },
        other => other,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsDoc {
    cell: String,
    capacity_ah: f64,
    entries: Vec<ParamsEntryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsEntryDoc {
    temp_c: f64,
    r0_ohm: f64,
    r1_ohm: f64,
    c1_farad: f64,
    r2_ohm: f64,
    c2_farad: f64,
}

/// Parses a parameter-table JSON document.
pub fn parse_params(bytes: &[u8]) -> Result<CellParamsTable> {
    let doc: ParamsDoc = serde_json::from_slice(bytes).map_err(|e| json_error(&e))?;
    if !doc.capacity_ah.is_finite() || doc.capacity_ah <= 0.0 {
        return Err(Error::validation(
            "capacity_ah",
            format!("must be positive, got {}", doc.capacity_ah),
        ));
    }
    let entries = doc
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            CellParams::new(
                e.temp_c,
                doc.capacity_ah,
                e.r0_ohm,
                RcBranch::new(e.r1_ohm, e.c1_farad),
                RcBranch::new(e.r2_ohm, e.c2_farad),
            )
            .map_err(|err| prefix(err, &format!("entries[{i}]")))
        })
        .collect::<Result<Vec<_>>>()?;
    CellParamsTable::new(doc.cell, entries)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<CellParamsTable> {
    parse_params(&read_file(path.as_ref())?)
}

pub fn params_to_json(table: &CellParamsTable) -> String {
    let doc = ParamsDoc {
        cell: table.cell().to_string(),
        capacity_ah: table.capacity_ah(),
        entries: table
            .entries()
            .iter()
            .map(|p| ParamsEntryDoc {
                temp_c: p.temp_c(),
                r0_ohm: p.r0_ohm(),
                r1_ohm: p.r1_ohm(),
                c1_farad: p.c1_farad(),
                r2_ohm: p.r2_ohm(),
                c2_farad: p.c2_farad(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("params document serializes");
    s.push('\n');
    s
}

pub fn save_params(table: &CellParamsTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, params_to_json(table)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct OcvDoc {
    curves: Vec<OcvCurveDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OcvCurveDoc {
    temp_c: f64,
    points: Vec<[f64; 2]>,
}

/// Parses an OCV JSON document into a per-temperature curve set.
pub fn parse_ocv(bytes: &[u8]) -> Result<OcvCurveSet> {
    let doc: OcvDoc = serde_json::from_slice(bytes).map_err(|e| json_error(&e))?;
    let curves = doc
        .curves
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let points = c.points.iter().map(|p| (p[0], p[1])).collect();
            OcvCurve::new(points)
                .map(|curve| (c.temp_c, curve))
                .map_err(|err| prefix(err, &format!("curves[{i}]")))
        })
        .collect::<Result<Vec<_>>>()?;
    OcvCurveSet::new(curves)
}

pub fn load_ocv(path: impl AsRef<Path>) -> Result<OcvCurveSet> {
    parse_ocv(&read_file(path.as_ref())?)
}

pub fn ocv_to_json(set: &OcvCurveSet) -> String {
    let doc = OcvDoc {
        curves: set
            .curves()
            .iter()
            .map(|(t, c)| OcvCurveDoc {
                temp_c: *t,
                points: c.points().iter().map(|&(s, v)| [s, v]).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("ocv document serializes");
    s.push('\n');
    s
}

pub fn save_ocv(set: &OcvCurveSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ocv_to_json(set)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TelemetrySeries> {
        parse_telemetry(text.as_bytes(), &ColumnMapping::default(), "test")
    }

    #[test]
    fn two_rows() {
        let s = parse("t_s,current_a,voltage_v,temp_c\n0,1.5,3.9,25\n1,1.5,3.89,\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.samples()[1].temp_c, None);
        assert_eq!(s.samples()[1].voltage_v, Some(3.89));
    }

    #[test]
    fn crlf_and_scientific() {
        let s = parse("t_s,current_a,voltage_v,temp_c\r\n0,1e-3,3.9E0,25\r\n1,-2.5e1,3.8,25\r\n").unwrap();
        assert_eq!(s.samples()[0].current_a, 1e-3);
        assert_eq!(s.samples()[1].current_a, -25.0);
    }

    #[test]
    fn time_going_backwards_names_row() {
        let mut text = String::from("t_s,current_a,voltage_v,temp_c\n");
        for t in [0, 1, 2, 3, 4, 5, 4, 8] {
            text.push_str(&format!("{t},1,3.7,25\n"));
        }
        match parse(&text).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 7),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_column_and_bad_number() {
        assert!(matches!(
            parse("t_s,current_a\n0,1\n"),
            Err(Error::Parse { row: 0, .. })
        ));
        let err = parse("t_s,current_a,voltage_v,temp_c\n0,abc,3.7,25\n").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }));
        assert!(parse("t_s,current_a,voltage_v,temp_c\n0,1,-3.7,25\n").is_err());
        assert!(parse("t_s,current_a,voltage_v,temp_c\n0,NaN,3.7,25\n").is_err());
    }

    #[test]
    fn charge_positive_mapping_negates() {
        let mapping = ColumnMapping {
            time: "Time".into(),
            current: "Current".into(),
            voltage: "Voltage".into(),
            temperature: "Temp".into(),
            sign: CurrentSign::ChargePositive,
        };
        let text = "Time,Voltage,Current,Temp\n0,3.9,2.0,25\n1,3.9,0,25\n2,3.8,-1.5,25\n";
        let s = parse_telemetry(text.as_bytes(), &mapping, "x").unwrap();
        let currents: Vec<f64> = s.samples().iter().map(|x| x.current_a).collect();
        assert_eq!(currents, vec![-2.0, 0.0, 1.5]);
        assert!(s.samples()[1].current_a.is_sign_positive());
    }

    #[test]
    fn telemetry_round_trip() {
        let series = TelemetrySeries::new(
            vec![
                Sample::new(0.0, 0.1, Some(3.712345678901234), Some(25.0)),
                Sample::new(0.1, -5.0, None, None),
            ],
            SeriesMetadata::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_telemetry(&mut buf, &series).unwrap();
        let back = parse_telemetry(buf.as_slice(), &ColumnMapping::default(), "").unwrap();
        assert_eq!(back.samples(), series.samples());
    }

    const PARAMS: &str = r#"{ "cell": "c", "capacity_ah": 5.0, "entries": [
        {"temp_c": 0, "r0_ohm": 0.02, "r1_ohm": 0.004, "c1_farad": 2500, "r2_ohm": 0.01, "c2_farad": 12000},
        {"temp_c": 25, "r0_ohm": 0.01, "r1_ohm": 0.003, "c1_farad": 3000, "r2_ohm": 0.008, "c2_farad": 15000} ] }"#;

    #[test]
    fn params_load_and_round_trip() {
        let t = parse_params(PARAMS.as_bytes()).unwrap();
        assert_eq!(t.entries().len(), 2);
        let back = parse_params(params_to_json(&t).as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn params_negative_r0_names_path() {
        let bad = PARAMS.replacen("\"r0_ohm\": 0.02", "\"r0_ohm\": -0.02", 1);
        match parse_params(bad.as_bytes()).unwrap_err() {
            Error::Validation { path, .. } => assert_eq!(path, "entries[0].r0_ohm"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn params_duplicate_temperature() {
        let bad = PARAMS.replacen("\"temp_c\": 25", "\"temp_c\": 0", 1);
        assert!(matches!(parse_params(bad.as_bytes()), Err(Error::Validation { .. })));
    }

    #[test]
    fn ocv_documents() {
        let ok = r#"{"curves":[{"temp_c":25,"points":[[0,3.0],[1,4.2]]}]}"#;
        let set = parse_ocv(ok.as_bytes()).unwrap();
        assert_eq!(set.curves().len(), 1);
        assert_eq!(parse_ocv(ocv_to_json(&set).as_bytes()).unwrap(), set);

        let late_start = r#"{"curves":[{"temp_c":25,"points":[[0.1,3.0],[1,4.2]]}]}"#;
        match parse_ocv(late_start.as_bytes()).unwrap_err() {
            Error::Validation { path, .. } => assert_eq!(path, "curves[0].points[0][0]"),
            e => panic!("unexpected {e}"),
        }
        let decreasing = r#"{"curves":[{"temp_c":25,"points":[[0,3.0],[0.5,2.9],[1,4.2]]}]}"#;
        match parse_ocv(decreasing.as_bytes()).unwrap_err() {
            Error::Validation { path, .. } => assert_eq!(path, "curves[0].points[1][1]"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_params("/nonexistent/params.json").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
