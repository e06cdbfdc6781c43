//! HPPC (hybrid pulse power characterization) profiles and ECM parameter
//! identification from pulse-response telemetry.
//!
//! Identification uses the usual two-stage approach:
//!
//! 1. `R0` from the instantaneous voltage jump at a current edge.
//! 2. `R1, C1, R2, C2` from a two-exponential least-squares fit of the
//!    relaxation that follows the pulse.
//!
//! The fitted amplitudes are corrected for the finite pulse length: an RC
//! branch charged from rest by a pulse of length `T` reaches
//! `R * I * (1 - exp(-T / tau))`, not its steady-state `R * I`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::cell_model::{CellParams, OcvCurve, RcBranch, SECONDS_PER_HOUR};
use crate::data_io::{Sample, SeriesMetadata, TelemetrySeries};
use crate::error::{Error, Result};
use crate::estimators::cc_run;

/// Rest before each stage.
pub const STAGE_REST_S: f64 = 3600.0;
/// Length of the discharge and regen pulses.
pub const PULSE_S: f64 = 10.0;
/// Relaxation after each pulse.
pub const RELAX_S: f64 = 600.0;
/// Default current-edge threshold.
pub const DEFAULT_EDGE_THRESHOLD_A: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentLabel {
    Rest,
    DischargePulse,
    RegenPulse,
    SocStepDischarge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSegment {
    pub current_a: f64,
    pub duration_s: f64,
    pub label: SegmentLabel,
}

/// A piecewise-constant current schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    segments: Vec<ProfileSegment>,
}

impl CurrentProfile {
    pub fn new(segments: Vec<ProfileSegment>) -> Result<Self> {
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
                return Err(Error::validation(
                    format!("segments[{i}].duration_s"),
                    "must be positive",
                ));
            }
            if !s.current_a.is_finite() {
                return Err(Error::validation(format!("segments[{i}].current_a"), "must be finite"));
            }
            if s.label == SegmentLabel::Rest && s.current_a != 0.0 {
                return Err(Error::validation(
                    format!("segments[{i}].current_a"),
                    "rest segments carry zero current",
                ));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[ProfileSegment] {
        &self.segments
    }

    /// `(current_a, dt_s)` pairs for the simulator.
    pub fn drive(&self) -> Vec<(f64, f64)> {
        self.segments.iter().map(|s| (s.current_a, s.duration_s)).collect()
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// Net discharged charge in ampere-seconds.
    pub fn net_charge_as(&self) -> f64 {
        self.segments.iter().map(|s| s.current_a * s.duration_s).sum()
    }

    /// The profile as telemetry rows (one per segment start plus a closing
    /// zero-current row), with an empty voltage column.
    pub fn to_telemetry(&self) -> TelemetrySeries {
        let mut t = 0.0;
        let mut samples = Vec::with_capacity(self.segments.len() + 1);
        for s in &self.segments {
            samples.push(Sample::new(t, s.current_a, None, None));
            t += s.duration_s;
        }
        samples.push(Sample::new(t, 0.0, None, None));
        TelemetrySeries::new(
            samples,
            SeriesMetadata {
                source: "hppc-profile".into(),
                ..Default::default()
            },
        )
        .expect("segment starts are strictly increasing")
    }
}

/// Converts telemetry rows back into drive segments: each row's current is
/// held until the next row; the last row only marks the end time.
pub fn drive_from_telemetry(series: &TelemetrySeries) -> Result<Vec<(f64, f64)>> {
    if series.len() < 2 {
        return Err(Error::InvalidInput("a profile needs at least 2 rows".into()));
    }
    Ok(series
        .samples()
        .windows(2)
        .map(|w| (w[0].current_a, w[1].t_s - w[0].t_s))
        .collect())
}

/// HPPC test settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HppcProtocol {
    pub capacity_ah: f64,
    pub discharge_c_rate: f64,
    pub regen_c_rate: f64,
    pub soc_step: f64,
    /// C-rate of the discharge that moves to the next SOC level.
    pub step_c_rate: f64,
}

impl HppcProtocol {
    pub fn new(capacity_ah: f64, discharge_c_rate: f64, regen_c_rate: f64, soc_step: f64) -> Self {
        Self {
            capacity_ah,
            discharge_c_rate,
            regen_c_rate,
            soc_step,
            step_c_rate: 1.0,
        }
    }

    /// Builds the profile: for each SOC level from full down to empty,
    /// rest 1 h, discharge pulse 10 s, rest 10 min, regen pulse 10 s,
    /// rest 10 min, then discharge to the next level. A closing 1 h rest
    /// records the OCV at empty.
    pub fn profile(&self) -> Result<CurrentProfile> {
        for (name, v) in [
            ("capacity_ah", self.capacity_ah),
            ("discharge_c_rate", self.discharge_c_rate),
            ("regen_c_rate", self.regen_c_rate),
            ("step_c_rate", self.step_c_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.soc_step > 0.0 && self.soc_step <= 0.5) {
            return Err(Error::validation(
                "soc_step",
                format!("must be in (0, 0.5], got {}", self.soc_step),
            ));
        }
        let levels = (1.0 / self.soc_step).round();
        if (levels * self.soc_step - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "soc_step",
                format!("{} does not divide 1 evenly", self.soc_step),
            ));
        }
        let levels = levels as usize;
        let cap_as = self.capacity_ah * SECONDS_PER_HOUR;
        let i_dis = self.capacity_ah * self.discharge_c_rate;
        let i_regen = -self.capacity_ah * self.regen_c_rate;
        let i_step = self.capacity_ah * self.step_c_rate;
        let pulse_net_as = (i_dis + i_regen) * PULSE_S;
        let step_as = cap_as / levels as f64 - pulse_net_as;
        if step_as <= 0.0 {
            return Err(Error::validation(
                "soc_step",
                "pulses move more charge than one SOC step; reduce pulse rates or enlarge the step",
            ));
        }
        let seg = |current_a, duration_s, label| ProfileSegment {
            current_a,
            duration_s,
            label,
        };
        let mut segments = Vec::with_capacity(levels * 6 + 1);
        for _ in 0..levels {
            segments.push(seg(0.0, STAGE_REST_S, SegmentLabel::Rest));
            segments.push(seg(i_dis, PULSE_S, SegmentLabel::DischargePulse));
            segments.push(seg(0.0, RELAX_S, SegmentLabel::Rest));
            segments.push(seg(i_regen, PULSE_S, SegmentLabel::RegenPulse));
            segments.push(seg(0.0, RELAX_S, SegmentLabel::Rest));
            segments.push(seg(i_step, step_as / i_step, SegmentLabel::SocStepDischarge));
        }
        segments.push(seg(0.0, STAGE_REST_S, SegmentLabel::Rest));
        CurrentProfile::new(segments)
    }
}

/// HPPC profile with a 1C SOC-step discharge.
pub fn generate_profile(
    capacity_ah: f64,
    discharge_c_rate: f64,
    regen_c_rate: f64,
    soc_step: f64,
) -> Result<CurrentProfile> {
    HppcProtocol::new(capacity_ah, discharge_c_rate, regen_c_rate, soc_step).profile()
}

/// Ohmic resistance from the first current edge in `series`.
pub fn identify_r0(series: &TelemetrySeries) -> Result<f64> {
    identify_r0_with(series, DEFAULT_EDGE_THRESHOLD_A)
}

/// `|dV| / |dI|` across the first pair of consecutive samples whose current
/// differs by at least `threshold_a`.
pub fn identify_r0_with(series: &TelemetrySeries, threshold_a: f64) -> Result<f64> {
    for w in series.samples().windows(2) {
        let di = w[1].current_a - w[0].current_a;
        if di.abs() >= threshold_a {
            let (Some(v0), Some(v1)) = (w[0].voltage_v, w[1].voltage_v) else {
                return Err(Error::InvalidData("voltage missing at the current edge".into()));
            };
            return Ok((v1 - v0).abs() / di.abs());
        }
    }
    Err(Error::NoStep { threshold_a })
}

/// The pulse that preceded a relaxation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseInfo {
    /// Mean pulse current (discharge-positive).
    pub current_a: f64,
    /// Pulse length. `f64::INFINITY` treats the branches as fully charged.
    pub duration_s: f64,
}

/// Starting point for the relaxation fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationGuess {
    pub v_inf: f64,
    pub a1_v: f64,
    pub tau1_s: f64,
    pub a2_v: f64,
    pub tau2_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// RMS voltage below which a single exponential is taken to explain
    /// the window (measurement noise level).
    pub noise_floor_v: f64,
    pub min_window_s: f64,
    pub min_samples: usize,
    /// Largest |current| treated as rest.
    pub rest_current_a: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            noise_floor_v: 2e-5,
            min_window_s: 60.0,
            min_samples: 20,
            rest_current_a: DEFAULT_EDGE_THRESHOLD_A,
        }
    }
}

/// Result of a relaxation fit, branches ordered `tau1 <= tau2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationFit {
    pub v_inf: f64,
    pub a1_v: f64,
    pub tau1_s: f64,
    pub a2_v: f64,
    pub tau2_s: f64,
    pub r1_ohm: f64,
    pub c1_farad: f64,
    pub r2_ohm: f64,
    pub c2_farad: f64,
    pub residual_rms_v: f64,
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

struct LmOutcome<const N: usize> {
    params: SVector<f64, N>,
    cost: f64,
    iterations: usize,
    history: Vec<f64>,
    converged: bool,
}

fn cost_of<const N: usize>(
    t: &[f64],
    y: &[f64],
    model: &impl Fn(&SVector<f64, N>, f64) -> (f64, SVector<f64, N>),
    p: &SVector<f64, N>,
) -> f64 {
    0.5 * t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let r = model(p, ti).0 - yi;
            r * r
        })
        .sum::<f64>()
}

/// Levenberg-Marquardt with Marquardt diagonal scaling. Only steps that
/// reduce the cost are accepted.
fn levenberg_marquardt<const N: usize>(
    t: &[f64],
    y: &[f64],
    model: impl Fn(&SVector<f64, N>, f64) -> (f64, SVector<f64, N>),
    start: SVector<f64, N>,
    max_iterations: usize,
) -> LmOutcome<N> {
    let mut p = start;
    let mut cost = cost_of(t, y, &model, &p);
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let floor = 1e-28 * t.len() as f64;
    for iteration in 1..=max_iterations {
        let mut jtj = SMatrix::<f64, N, N>::zeros();
        let mut jtr = SVector::<f64, N>::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let (v, g) = model(&p, ti);
            let r = v - yi;
            jtj += g * g.transpose();
            jtr += g * r;
        }
        if cost <= floor || jtr.amax() <= 1e-15 * (1.0 + cost) {
            return LmOutcome {
                params: p,
                cost,
                iterations: iteration,
                history,
                converged: true,
            };
        }
        let mut damped = jtj;
        for i in 0..N {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = -chol.solve(&jtr);
        let trial = p + step;
        let trial_cost = cost_of(t, y, &model, &trial);
        if trial_cost.is_finite() && trial_cost < cost {
            let rel = (cost - trial_cost) / cost;
            p = trial;
            cost = trial_cost;
            history.push(cost);
            lambda = (lambda / 3.0).max(1e-12);
            if rel < 1e-12 && step.amax() < 1e-10 * (1.0 + p.amax()) {
                return LmOutcome {
                    params: p,
                    cost,
                    iterations: iteration,
                    history,
                    converged: true,
                };
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                // No descent direction left at this precision.
                return LmOutcome {
                    params: p,
                    cost,
                    iterations: iteration,
                    history,
                    converged: true,
                };
            }
        }
    }
    LmOutcome {
        params: p,
        cost,
        iterations: max_iterations,
        history,
        converged: false,
    }
}

// v(t) = v_inf - a1 exp(-t/tau1) - a2 exp(-t/tau2), parameterised as
// [v_inf, a1, ln tau1, a2, ln tau2].
fn two_exponential(p: &SVector<f64, 5>, t: f64) -> (f64, SVector<f64, 5>) {
    let (tau1, tau2) = (p[2].exp(), p[4].exp());
    let (e1, e2) = ((-t / tau1).exp(), (-t / tau2).exp());
    let v = p[0] - p[1] * e1 - p[3] * e2;
    let g = SVector::<f64, 5>::from([1.0, -e1, -p[1] * e1 * t / tau1, -e2, -p[3] * e2 * t / tau2]);
    (v, g)
}

fn one_exponential(p: &SVector<f64, 3>, t: f64) -> (f64, SVector<f64, 3>) {
    let tau = p[2].exp();
    let e = (-t / tau).exp();
    (p[0] - p[1] * e, SVector::<f64, 3>::from([1.0, -e, -p[1] * e * t / tau]))
}

fn rms(cost: f64, n: usize) -> f64 {
    (2.0 * cost / n as f64).sqrt()
}

/// Best starting point on a log-spaced grid of time-constant pairs. For
/// fixed time constants the amplitudes and asymptote are linear, so each
/// grid point is solved exactly by least squares.
fn grid_guess(t: &[f64], y: &[f64], window: f64) -> Option<RelaxationGuess> {
    let dt_min = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let lo = dt_min.max(window * 1e-4);
    let hi = window * 2.0;
    const STEPS: usize = 24;
    let taus: Vec<f64> = (0..STEPS)
        .map(|i| lo * (hi / lo).powf(i as f64 / (STEPS - 1) as f64))
        .collect();
    let mut best: Option<(f64, RelaxationGuess)> = None;
    for (i, &tau1) in taus.iter().enumerate() {
        for &tau2 in &taus[i + 1..] {
            let mut ata = Matrix3::<f64>::zeros();
            let mut aty = Vector3::<f64>::zeros();
            for (&ti, &yi) in t.iter().zip(y) {
                let row = Vector3::new(1.0, -(-ti / tau1).exp(), -(-ti / tau2).exp());
                ata += row * row.transpose();
                aty += row * yi;
            }
            let Some(x) = ata.cholesky().map(|c| c.solve(&aty)) else {
                continue;
            };
            let cost: f64 = t
                .iter()
                .zip(y)
                .map(|(&ti, &yi)| {
                    let r = x[0] - x[1] * (-ti / tau1).exp() - x[2] * (-ti / tau2).exp() - yi;
                    r * r
                })
                .sum();
            if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
                let g = RelaxationGuess {
                    v_inf: x[0],
                    a1_v: x[1],
                    tau1_s: tau1,
                    a2_v: x[2],
                    tau2_s: tau2,
                };
                best = Some((cost, g));
            }
        }
    }
    best.map(|(_, g)| g)
}

/// Fits a two-exponential relaxation to a zero-current window that starts
/// at the end of `pulse`.
pub fn fit_relaxation(
    relax: &TelemetrySeries,
    pulse: &PulseInfo,
    guess: Option<RelaxationGuess>,
) -> Result<RelaxationFit> {
    fit_relaxation_with(relax, pulse, guess, &FitOptions::default())
}

pub fn fit_relaxation_with(
    relax: &TelemetrySeries,
    pulse: &PulseInfo,
    guess: Option<RelaxationGuess>,
    options: &FitOptions,
) -> Result<RelaxationFit> {
    let samples = relax.samples();
    if samples.len() < options.min_samples {
        return Err(Error::InsufficientData(format!(
            "relaxation window has {} samples, need {}",
            samples.len(),
            options.min_samples
        )));
    }
    let window = relax.duration_s();
    if window < options.min_window_s {
        return Err(Error::InsufficientData(format!(
            "relaxation window is {window} s, need {} s",
            options.min_window_s
        )));
    }
    if samples.iter().any(|s| s.current_a.abs() >= options.rest_current_a) {
        return Err(Error::InvalidData("relaxation window carries current".into()));
    }
    if !(pulse.current_a.is_finite() && pulse.current_a != 0.0) || pulse.duration_s.is_nan() || pulse.duration_s <= 0.0
    {
        return Err(Error::InvalidInput(
            "pulse must have non-zero current and positive length".into(),
        ));
    }
    let t0 = samples[0].t_s;
    let t: Vec<f64> = samples.iter().map(|s| s.t_s - t0).collect();
    let y = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.voltage_v.ok_or_else(|| Error::Parse {
                row: i + 1,
                message: "voltage_v is required for fitting".into(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = y.len();
    let (v_first, v_last) = (y[0], y[n - 1]);

    let single = levenberg_marquardt(
        &t,
        &y,
        one_exponential,
        SVector::<f64, 3>::from([v_last, v_last - v_first, (window / 5.0).ln()]),
        options.max_iterations,
    );
    if rms(single.cost, n) <= options.noise_floor_v {
        return Err(Error::DegenerateFit(format!(
            "a single exponential explains the window to {:.2e} V RMS; use a 1RC model",
            rms(single.cost, n)
        )));
    }

    let guess = match guess {
        Some(g) => g,
        None => grid_guess(&t, &y, window).unwrap_or(RelaxationGuess {
            v_inf: v_last,
            a1_v: 0.5 * (v_last - v_first),
            tau1_s: window / 10.0,
            a2_v: 0.5 * (v_last - v_first),
            tau2_s: window / 2.0,
        }),
    };
    if !(guess.tau1_s > 0.0 && guess.tau2_s > 0.0) {
        return Err(Error::InvalidInput("initial time constants must be positive".into()));
    }
    let start = SVector::<f64, 5>::from([
        guess.v_inf,
        guess.a1_v,
        guess.tau1_s.ln(),
        guess.a2_v,
        guess.tau2_s.ln(),
    ]);
    let fit = levenberg_marquardt(&t, &y, two_exponential, start, options.max_iterations);
    let residual = rms(fit.cost, n);
    if !fit.converged {
        return Err(Error::FitFailure {
            iterations: fit.iterations,
            best_residual_v: residual,
        });
    }
    let p = fit.params;
    let (mut b1, mut b2) = ((p[1], p[2].exp()), (p[3], p[4].exp()));
    if b1.1 > b2.1 {
        std::mem::swap(&mut b1, &mut b2);
    }
    let (a1, tau1) = b1;
    let (a2, tau2) = b2;
    let same_sign = |a: f64| a * pulse.current_a > 0.0;
    if !same_sign(a1) || !same_sign(a2) || tau2 / tau1 < 1.05 || !tau2.is_finite() {
        return Err(Error::DegenerateFit(format!(
            "branches are not separable (a1={a1:.3e} V tau1={tau1:.3e} s, a2={a2:.3e} V tau2={tau2:.3e} s); use a 1RC model"
        )));
    }
    let resistance = |a: f64, tau: f64| a / (pulse.current_a * (1.0 - (-pulse.duration_s / tau).exp()));
    let (r1, r2) = (resistance(a1, tau1), resistance(a2, tau2));
    Ok(RelaxationFit {
        v_inf: p[0],
        a1_v: a1,
        tau1_s: tau1,
        a2_v: a2,
        tau2_s: tau2,
        r1_ohm: r1,
        c1_farad: tau1 / r1,
        r2_ohm: r2,
        c2_farad: tau2 / r2,
        residual_rms_v: residual,
        iterations: fit.iterations,
        cost_history: fit.history,
    })
}

/// Identification result for one discharge pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseFeature {
    pub soc_level: f64,
    pub r0_ohm: f64,
    pub r1_ohm: f64,
    pub c1_farad: f64,
    pub r2_ohm: f64,
    pub c2_farad: f64,
    /// Rest voltage just before the pulse.
    pub ocv_v: f64,
    pub fit_residual_v: f64,
}

/// Settings for whole-run identification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HppcOptions {
    pub edge_threshold_a: f64,
    /// Longest constant-current run treated as a pulse.
    pub max_pulse_s: f64,
    /// Shortest rest window used for an OCV point.
    pub min_ocv_rest_s: f64,
    /// SOC at the first sample.
    pub initial_soc: f64,
    pub fit: FitOptions,
}

impl Default for HppcOptions {
    fn default() -> Self {
        Self {
            edge_threshold_a: DEFAULT_EDGE_THRESHOLD_A,
            max_pulse_s: 30.0,
            min_ocv_rest_s: RELAX_S,
            initial_soc: 1.0,
            fit: FitOptions::default(),
        }
    }
}

/// A run of samples with (nearly) constant current.
#[derive(Debug, Clone, Copy)]
struct CurrentRun {
    start: usize,
    /// Exclusive.
    end: usize,
    mean_current_a: f64,
    duration_s: f64,
}

fn split_runs(series: &TelemetrySeries, threshold_a: f64) -> Vec<CurrentRun> {
    let s = series.samples();
    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..=s.len() {
        if k == s.len() || (s[k].current_a - s[k - 1].current_a).abs() >= threshold_a {
            let end_t = if k < s.len() { s[k].t_s } else { s[k - 1].t_s };
            let mean = s[start..k].iter().map(|x| x.current_a).sum::<f64>() / (k - start) as f64;
            runs.push(CurrentRun {
                start,
                end: k,
                mean_current_a: mean,
                duration_s: end_t - s[start].t_s,
            });
            start = k;
        }
    }
    runs
}

/// Finds every discharge pulse bracketed by rests and identifies R0 and the
/// two RC branches for each.
pub fn identify_pulses(run: &TelemetrySeries, capacity_ah: f64, options: &HppcOptions) -> Result<Vec<PulseFeature>> {
    let socs = cc_run(options.initial_soc, run, capacity_ah)?;
    let samples = run.samples();
    let runs = split_runs(run, options.edge_threshold_a);
    let is_rest = |r: &CurrentRun| r.mean_current_a.abs() < options.edge_threshold_a;
    let mut features = Vec::new();
    for i in 1..runs.len().saturating_sub(1) {
        let (before, pulse, after) = (runs[i - 1], runs[i], runs[i + 1]);
        let is_pulse = pulse.mean_current_a >= options.edge_threshold_a
            && pulse.duration_s <= options.max_pulse_s
            && is_rest(&before)
            && is_rest(&after)
            && after.duration_s >= options.fit.min_window_s;
        if !is_pulse {
            continue;
        }
        let r0 = identify_r0_with(&run.slice(pulse.start - 1..pulse.start + 1), options.edge_threshold_a)?;
        let fit = fit_relaxation_with(
            &run.slice(after.start..after.end),
            &PulseInfo {
                current_a: pulse.mean_current_a,
                duration_s: pulse.duration_s,
            },
            None,
            &options.fit,
        )?;
        features.push(PulseFeature {
            soc_level: socs[pulse.start],
            r0_ohm: r0,
            r1_ohm: fit.r1_ohm,
            c1_farad: fit.c1_farad,
            r2_ohm: fit.r2_ohm,
            c2_farad: fit.c2_farad,
            ocv_v: samples[pulse.start - 1].voltage_v.unwrap_or(f64::NAN),
            fit_residual_v: fit.residual_rms_v,
        });
    }
    if features.is_empty() {
        return Err(Error::InsufficientData(
            "no discharge pulse bracketed by rests was found".into(),
        ));
    }
    Ok(features)
}

/// OCV curve from the final sample of every rest window of at least
/// `options.min_ocv_rest_s`, paired with the Coulomb-counted SOC.
pub fn extract_ocv(run: &TelemetrySeries, capacity_ah: f64) -> Result<OcvCurve> {
    extract_ocv_with(run, capacity_ah, &HppcOptions::default())
}

pub fn extract_ocv_with(run: &TelemetrySeries, capacity_ah: f64, options: &HppcOptions) -> Result<OcvCurve> {
    let socs = cc_run(options.initial_soc, run, capacity_ah)?;
    let samples = run.samples();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for r in split_runs(run, options.edge_threshold_a) {
        if r.mean_current_a.abs() >= options.edge_threshold_a || r.duration_s < options.min_ocv_rest_s - 1e-6 {
            continue;
        }
        let last = r.end - 1;
        let v = samples[last]
            .voltage_v
            .ok_or_else(|| Error::InvalidData(format!("voltage missing at row {}", last + 1)))?;
        // Coulomb counting leaves round-off at the ends of the range.
        let soc = match socs[last] {
            s if s < 1e-9 => 0.0,
            s if s > 1.0 - 1e-9 => 1.0,
            s => s,
        };
        points.push((soc, v));
    }
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "found {} rest window(s) of at least {} s, need 2",
            points.len(),
            options.min_ocv_rest_s
        )));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in points.windows(2) {
        if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
            return Err(Error::InvalidData(format!(
                "rest voltages are not strictly increasing with SOC ({:.4} V at SOC {:.4} vs {:.4} V at SOC {:.4})",
                w[0].1, w[0].0, w[1].1, w[1].0
            )));
        }
    }
    let extend = |a: (f64, f64), b: (f64, f64), soc: f64| a.1 + (soc - a.0) * (b.1 - a.1) / (b.0 - a.0);
    if points[0].0 > 0.0 {
        let v0 = extend(points[0], points[1], 0.0);
        points.insert(0, (0.0, v0));
    }
    let n_now = points.len();
    if points[n_now - 1].0 < 1.0 {
        let v1 = extend(points[n_now - 2], points[n_now - 1], 1.0);
        points.push((1.0, v1));
    }
    OcvCurve::new(points).map_err(|e| Error::InvalidData(e.to_string()))
}

/// Median of each parameter over the features whose SOC lies in
/// `[soc_min, soc_max]` (all features if none do).
pub fn assemble_params(
    features: &[PulseFeature],
    temp_c: f64,
    capacity_ah: f64,
    soc_min: f64,
    soc_max: f64,
) -> Result<CellParams> {
    if features.is_empty() {
        return Err(Error::InsufficientData("no pulse features".into()));
    }
    let mut chosen: Vec<&PulseFeature> = features
        .iter()
        .filter(|f| f.soc_level >= soc_min && f.soc_level <= soc_max)
        .collect();
    if chosen.is_empty() {
        chosen = features.iter().collect();
    }
    let median = |get: fn(&PulseFeature) -> f64| {
        let mut v: Vec<f64> = chosen.iter().map(|f| get(f)).collect();
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    };
    CellParams::new(
        temp_c,
        capacity_ah,
        median(|f| f.r0_ohm),
        RcBranch::new(median(|f| f.r1_ohm), median(|f| f.c1_farad)),
        RcBranch::new(median(|f| f.r2_ohm), median(|f| f.c2_farad)),
    )
}

/// Everything identified from one HPPC run at one temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct HppcIdentification {
    pub features: Vec<PulseFeature>,
    pub ocv: OcvCurve,
    pub params: CellParams,
}

pub fn identify(
    run: &TelemetrySeries,
    capacity_ah: f64,
    temp_c: f64,
    options: &HppcOptions,
) -> Result<HppcIdentification> {
    let features = identify_pulses(run, capacity_ah, options)?;
    let ocv = extract_ocv_with(run, capacity_ah, options)?;
    let params = assemble_params(&features, temp_c, capacity_ah, 0.2, 0.8)?;
    Ok(HppcIdentification { features, ocv, params })
}
