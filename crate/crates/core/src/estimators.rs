//! Coulomb counting and the extended Kalman filter.
//!
//! Both estimators track SOC as a fraction with discharge-positive current.
//! The EKF state is `[soc, u1, u2]` with the 2RC model as its process model
//! and the terminal voltage as its scalar measurement, so the gain needs a
//! scalar division rather than a matrix inverse.

use std::io::Write;

use nalgebra::{Matrix3, RowVector3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::cell_model::{state_transition, terminal_voltage, CellModel, CellParams, CellState, OcvCurve};
use crate::data_io::TelemetrySeries;
use crate::error::{ensure_finite, Error, Result};

/// One Coulomb-counting step: `soc - I*dt/Q`, clamped to `[0, 1]`.
pub fn cc_step(soc: f64, current_a: f64, dt_s: f64, capacity_ah: f64) -> Result<f64> {
    ensure_finite("soc", soc)?;
    ensure_finite("current_a", current_a)?;
    ensure_finite("dt_s", dt_s)?;
    ensure_finite("capacity_ah", capacity_ah)?;
    if dt_s <= 0.0 {
        return Err(Error::InvalidInput(format!("dt_s must be positive, got {dt_s}")));
    }
    if capacity_ah <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "capacity_ah must be positive, got {capacity_ah}"
        )));
    }
    Ok((soc - current_a * dt_s / (capacity_ah * 3600.0)).clamp(0.0, 1.0))
}

/// Coulomb counting over a series, one SOC value per sample.
///
/// Left-rectangle rule: each sample's current is held until the next one.
/// The initial error is never corrected.
pub fn cc_run(initial_soc: f64, series: &TelemetrySeries, capacity_ah: f64) -> Result<Vec<f64>> {
    ensure_finite("initial_soc", initial_soc)?;
    let samples = series.samples();
    let mut out = Vec::with_capacity(samples.len());
    if samples.is_empty() {
        return Ok(out);
    }
    let mut soc = initial_soc.clamp(0.0, 1.0);
    out.push(soc);
    for pair in samples.windows(2) {
        soc = cc_step(soc, pair[0].current_a, pair[1].t_s - pair[0].t_s, capacity_ah)?;
        out.push(soc);
    }
    Ok(out)
}

/// Form of the covariance measurement update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceUpdate {
    /// `P <- (I - K C) P`
    #[default]
    Simple,
    /// `P <- (I - K C) P (I - K C)^T + K R K^T`
    Joseph,
}

/// EKF noise tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    /// Diagonal of the process noise covariance Q.
    pub process_noise: [f64; 3],
    /// Terminal-voltage measurement variance R in V^2.
    pub measurement_noise: f64,
    /// Diagonal of the initial covariance P0.
    pub initial_covariance: [f64; 3],
    pub covariance_update: CovarianceUpdate,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            process_noise: [1e-7, 1e-8, 1e-8],
            measurement_noise: 1e-4,
            initial_covariance: [0.01, 1e-4, 1e-4],
            covariance_update: CovarianceUpdate::Simple,
        }
    }
}

impl EkfConfig {
    pub fn belief(&self, mean: CellState) -> Result<EkfBelief> {
        EkfBelief::new(
            mean,
            Matrix3::from_diagonal(&Vector3::from(self.initial_covariance)),
            Matrix3::from_diagonal(&Vector3::from(self.process_noise)),
            self.measurement_noise,
        )
        .map(|b| b.with_covariance_update(self.covariance_update))
    }
}

/// Gaussian belief over `[soc, u1, u2]` together with the noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfBelief {
    pub mean: CellState,
    pub cov: Matrix3<f64>,
    pub process_noise: Matrix3<f64>,
    pub measurement_noise: f64,
    pub covariance_update: CovarianceUpdate,
}

/// Largest absolute asymmetry tolerated in a covariance matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Smallest eigenvalue tolerated in a covariance matrix.
pub const PSD_TOLERANCE: f64 = -1e-10;

pub fn asymmetry(m: &Matrix3<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

pub fn min_eigenvalue(m: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn check_covariance(name: &str, m: &Matrix3<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation(name, "entries must be finite"));
    }
    if asymmetry(m) > SYMMETRY_TOLERANCE {
        return Err(Error::validation(name, "matrix must be symmetric"));
    }
    if min_eigenvalue(m) < PSD_TOLERANCE {
        return Err(Error::validation(name, "matrix must be positive semi-definite"));
    }
    Ok(())
}

impl EkfBelief {
    pub fn new(
        mean: CellState,
        cov: Matrix3<f64>,
        process_noise: Matrix3<f64>,
        measurement_noise: f64,
    ) -> Result<Self> {
        check_covariance("cov", &cov)?;
        check_covariance("process_noise", &process_noise)?;
        if !measurement_noise.is_finite() || measurement_noise <= 0.0 {
            return Err(Error::validation("measurement_noise", "must be finite and positive"));
        }
        Ok(Self {
            mean: mean.clamped(),
            cov: symmetrize(&cov),
            process_noise: symmetrize(&process_noise),
            measurement_noise,
            covariance_update: CovarianceUpdate::Simple,
        })
    }

    pub fn with_covariance_update(mut self, form: CovarianceUpdate) -> Self {
        self.covariance_update = form;
        self
    }

    pub fn soc_variance(&self) -> f64 {
        self.cov[(0, 0)]
    }
}

/// Time update: propagates the mean through the cell dynamics and the
/// covariance as `A P A^T + Q`.
pub fn ekf_predict(belief: &EkfBelief, params: &CellParams, current_a: f64, dt_s: f64) -> Result<EkfBelief> {
    ensure_finite("current_a", current_a)?;
    let tr = state_transition(params, dt_s)?;
    let mean = tr.apply(belief.mean, current_a).clamped();
    let cov = symmetrize(&(tr.a * belief.cov * tr.a.transpose() + belief.process_noise));
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "covariance became non-finite during predict".into(),
        ));
    }
    Ok(EkfBelief { mean, cov, ..*belief })
}

/// Result of a measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub belief: EkfBelief,
    /// Measured minus predicted terminal voltage.
    pub innovation_v: f64,
    pub v_predicted: f64,
    pub gain: Vector3<f64>,
}

/// Measurement update with the terminal voltage.
///
/// The measurement Jacobian is `C = [dOCV/dsoc, -1, -1]`.
pub fn ekf_update(
    belief: &EkfBelief,
    params: &CellParams,
    curve: &OcvCurve,
    v_measured: f64,
    current_a: f64,
) -> Result<UpdateOutcome> {
    ensure_finite("v_measured", v_measured)?;
    ensure_finite("current_a", current_a)?;
    let c = RowVector3::new(curve.slope(belief.mean.soc), -1.0, -1.0);
    let pc = belief.cov * c.transpose();
    let variance = (c * pc)[0] + belief.measurement_noise;
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::DegenerateUpdate { row: None, variance });
    }
    let gain = pc / variance;
    let v_predicted = terminal_voltage(params, curve, &belief.mean, current_a);
    let innovation_v = v_measured - v_predicted;
    let mean = CellState::from_vector(&(belief.mean.to_vector() + gain * innovation_v)).clamped();
    let cov = match belief.covariance_update {
        // (I - K C) P == P - K (P C^T)^T for symmetric P
        CovarianceUpdate::Simple => belief.cov - gain * pc.transpose(),
        CovarianceUpdate::Joseph => {
            let ikc = Matrix3::identity() - gain * c;
            ikc * belief.cov * ikc.transpose() + gain * gain.transpose() * belief.measurement_noise
        }
    };
    Ok(UpdateOutcome {
        belief: EkfBelief {
            mean,
            cov: symmetrize(&cov),
            ..*belief
        },
        innovation_v,
        v_predicted,
        gain,
    })
}

/// One row of an estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub t_s: f64,
    pub soc_cc: f64,
    pub soc_ekf: f64,
    pub soc_true: Option<f64>,
    pub v_measured: f64,
    pub v_predicted: f64,
    pub innovation_v: f64,
    pub cov_soc: f64,
}

/// Side-by-side CC and EKF estimates over a telemetry series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateTrace {
    pub rows: Vec<EstimateRow>,
}

/// Which estimator columns to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Cc,
    Ekf,
    #[default]
    Both,
}

impl EstimateTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_truth(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.soc_true.is_some())
    }

    /// Attaches a reference SOC column; `truth` must have one value per row.
    pub fn attach_truth(&mut self, truth: &[f64]) -> Result<()> {
        if truth.len() != self.rows.len() {
            return Err(Error::InvalidInput(format!(
                "truth has {} values for {} rows",
                truth.len(),
                self.rows.len()
            )));
        }
        for (row, &t) in self.rows.iter_mut().zip(truth) {
            row.soc_true = Some(t);
        }
        Ok(())
    }

    pub fn soc_cc(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.soc_cc).collect()
    }

    pub fn soc_ekf(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.soc_ekf).collect()
    }

    /// Writes the trace as CSV with the columns selected by `method`.
    pub fn write_csv<W: Write>(&self, out: W, method: Method) -> Result<()> {
        let mut w = std::io::BufWriter::new(out);
        let io = |e| Error::io("<output>", e);
        let truth = self.has_truth();
        let mut header = vec!["t_s"];
        if method != Method::Ekf {
            header.push("soc_cc");
        }
        if method != Method::Cc {
            header.push("soc_ekf");
        }
        if truth {
            header.push("soc_true");
        }
        if method != Method::Cc {
            header.extend(["v_measured", "v_predicted", "innovation_v", "cov_soc"]);
        }
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for r in &self.rows {
            let mut cells = vec![r.t_s.to_string()];
            if method != Method::Ekf {
                cells.push(r.soc_cc.to_string());
            }
            if method != Method::Cc {
                cells.push(r.soc_ekf.to_string());
            }
            if let (true, Some(t)) = (truth, r.soc_true) {
                cells.push(t.to_string());
            }
            if method != Method::Cc {
                cells.extend([r.v_measured, r.v_predicted, r.innovation_v, r.cov_soc].map(|x| x.to_string()));
            }
            writeln!(w, "{}", cells.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Options for a full estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Starting SOC for the Coulomb counter.
    pub cc_initial_soc: f64,
    /// Temperature used for samples without a temperature reading.
    pub default_temp_c: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            cc_initial_soc: 1.0,
            default_temp_c: 25.0,
        }
    }
}

/// Snapshot handed to an observer after each EKF row.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub row: usize,
    /// Belief entering the measurement update (after predict, except on row 0).
    pub prior: &'a EkfBelief,
    pub posterior: &'a EkfBelief,
}

/// Runs CC and EKF side by side over `series`.
///
/// Row 0 is a measurement update only. Every later row first predicts over
/// the interval from the previous sample (using that sample's current and
/// temperature), then updates with its own voltage.
pub fn ekf_run(
    initial: &EkfBelief,
    series: &TelemetrySeries,
    model: &CellModel,
    options: &RunOptions,
) -> Result<EstimateTrace> {
    ekf_run_observed(initial, series, model, options, |_| {})
}

pub fn ekf_run_observed(
    initial: &EkfBelief,
    series: &TelemetrySeries,
    model: &CellModel,
    options: &RunOptions,
    mut observer: impl FnMut(StepRecord<'_>),
) -> Result<EstimateTrace> {
    let samples = series.samples();
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "estimation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let soc_cc = cc_run(options.cc_initial_soc, series, model.capacity_ah())?;
    let temp_of = |i: usize| samples[i].temp_c.unwrap_or(options.default_temp_c);

    let mut belief = *initial;
    let mut rows = Vec::with_capacity(samples.len());
    for (k, sample) in samples.iter().enumerate() {
        let prior = if k == 0 {
            belief
        } else {
            let prev = &samples[k - 1];
            let params = model.params.params_at(temp_of(k - 1));
            ekf_predict(&belief, &params, prev.current_a, sample.t_s - prev.t_s)?
        };
        let v_measured = sample.voltage_v.ok_or_else(|| Error::Parse {
            row: k + 1,
            message: "voltage_v is required for estimation".into(),
        })?;
        let (params, curve) = model.at(temp_of(k));
        let outcome = ekf_update(&prior, &params, &curve, v_measured, sample.current_a).map_err(|e| match e {
            Error::DegenerateUpdate { variance, .. } => Error::DegenerateUpdate { row: Some(k), variance },
            other => other,
        })?;
        belief = outcome.belief;
        observer(StepRecord {
            row: k,
            prior: &prior,
            posterior: &belief,
        });
        rows.push(EstimateRow {
            t_s: sample.t_s,
            soc_cc: soc_cc[k],
            soc_ekf: belief.mean.soc,
            soc_true: None,
            v_measured,
            v_predicted: outcome.v_predicted,
            innovation_v: outcome.innovation_v,
            cov_soc: belief.soc_variance(),
        });
    }
    Ok(EstimateTrace { rows })
}
