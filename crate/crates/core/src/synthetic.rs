//! Synthetic telemetry: drive cycles, noiseless sampling of the cell model,
//! and seeded measurement noise.
//!
//! Sampling follows the telemetry convention: a sample at `t_k` carries the
//! current that flows from `t_k` until the next sample, and the voltage the
//! cell shows at `t_k` while that current flows.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cell_model::{state_transition, terminal_voltage, CellParams, CellState, OcvCurve};
use crate::data_io::{Sample, SeriesMetadata, TelemetrySeries};
use crate::error::{Error, Result};

/// Repeating discharge / rest / charge / rest block.
///
/// The charge leg is sized so that each block removes a net
/// `depletion_per_hour` of capacity per hour of block length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveCycle {
    pub discharge_c_rate: f64,
    pub charge_c_rate: f64,
    pub discharge_s: f64,
    pub rest_s: f64,
    /// Net SOC fraction removed per hour.
    pub depletion_per_hour: f64,
}

impl Default for DriveCycle {
    fn default() -> Self {
        Self {
            discharge_c_rate: 0.5,
            charge_c_rate: 0.5,
            discharge_s: 1800.0,
            rest_s: 600.0,
            depletion_per_hour: 0.01,
        }
    }
}

impl DriveCycle {
    /// Segments `(current_a, dt_s)` covering exactly `duration_s`.
    pub fn segments(&self, capacity_ah: f64, duration_s: f64) -> Result<Vec<(f64, f64)>> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("drive.{name} must be positive, got {v}")))
            }
        };
        positive("discharge_c_rate", self.discharge_c_rate)?;
        positive("charge_c_rate", self.charge_c_rate)?;
        positive("discharge_s", self.discharge_s)?;
        positive("rest_s", self.rest_s)?;
        positive("duration_s", duration_s)?;
        if !self.depletion_per_hour.is_finite() || self.depletion_per_hour < 0.0 {
            return Err(Error::Config("drive.depletion_per_hour must be >= 0".into()));
        }
        let i_d = self.discharge_c_rate * capacity_ah;
        let i_c = self.charge_c_rate * capacity_ah;
        let dep = self.depletion_per_hour * capacity_ah;
        let charge_s = (i_d * self.discharge_s - dep * (self.discharge_s + 2.0 * self.rest_s)) / (i_c + dep);
        if charge_s <= 0.0 {
            return Err(Error::Config("drive depletion exceeds the discharge leg".into()));
        }
        let block = [
            (i_d, self.discharge_s),
            (0.0, self.rest_s),
            (-i_c, charge_s),
            (0.0, self.rest_s),
        ];
        let mut out = Vec::new();
        let mut t = 0.0;
        'outer: loop {
            for &(i, d) in &block {
                let remaining = duration_s - t;
                if remaining <= 1e-9 {
                    break 'outer;
                }
                let d = d.min(remaining);
                out.push((i, d));
                t += d;
            }
        }
        Ok(out)
    }
}

/// Noiseless telemetry plus the true state at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRun {
    pub telemetry: TelemetrySeries,
    pub truth: Vec<CellState>,
}

impl SyntheticRun {
    pub fn true_soc(&self) -> Vec<f64> {
        self.truth.iter().map(|s| s.soc).collect()
    }
}

/// Samples the cell model under `drive` every `sample_dt_s` seconds.
///
/// Segments are split into equal sub-steps no longer than `sample_dt_s`.
/// The final sample is taken with zero current.
pub fn synthesize(
    params: &CellParams,
    curve: &OcvCurve,
    temp_c: f64,
    initial: &CellState,
    drive: &[(f64, f64)],
    sample_dt_s: f64,
) -> Result<SyntheticRun> {
    if !(sample_dt_s.is_finite() && sample_dt_s > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample_dt_s must be positive, got {sample_dt_s}"
        )));
    }
    if drive.is_empty() {
        return Err(Error::InvalidInput("drive profile is empty".into()));
    }
    let mut samples = Vec::new();
    let mut truth = Vec::new();
    let mut state = initial.clamped();
    let mut t = 0.0;
    for &(current_a, dur) in drive {
        if !(dur.is_finite() && dur > 0.0) || !current_a.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid drive segment ({current_a} A, {dur} s)"
            )));
        }
        let n = ((dur / sample_dt_s) - 1e-9).ceil().max(1.0) as usize;
        let sub = dur / n as f64;
        let tr = state_transition(params, sub)?;
        for _ in 0..n {
            samples.push(Sample::new(
                t,
                current_a,
                Some(terminal_voltage(params, curve, &state, current_a)),
                Some(temp_c),
            ));
            truth.push(state);
            state = tr.apply(state, current_a).clamped();
            t += sub;
        }
    }
    samples.push(Sample::new(
        t,
        0.0,
        Some(terminal_voltage(params, curve, &state, 0.0)),
        Some(temp_c),
    ));
    truth.push(state);
    let telemetry = TelemetrySeries::new(
        samples,
        SeriesMetadata {
            source: "synthetic".into(),
            cell_id: None,
            capacity_ah: Some(params.capacity_ah()),
        },
    )?;
    Ok(SyntheticRun { telemetry, truth })
}

/// Gaussian measurement noise on current and voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub current_sigma_a: f64,
    pub voltage_sigma_v: f64,
}

impl NoiseSpec {
    pub fn is_zero(&self) -> bool {
        self.current_sigma_a == 0.0 && self.voltage_sigma_v == 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("current_sigma_a", self.current_sigma_a),
            ("voltage_sigma_v", self.voltage_sigma_v),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("noise.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Returns a corrupted copy of `series`. Time stamps and temperatures are
    /// untouched.
    pub fn apply<R: Rng>(&self, series: &TelemetrySeries, rng: &mut R) -> Result<TelemetrySeries> {
        self.validate()?;
        if self.is_zero() {
            return Ok(series.clone());
        }
        let i_noise = Normal::new(0.0, self.current_sigma_a).expect("sigma validated");
        let v_noise = Normal::new(0.0, self.voltage_sigma_v).expect("sigma validated");
        let samples = series
            .samples()
            .iter()
            .map(|s| {
                let di = i_noise.sample(rng);
                let dv = v_noise.sample(rng);
                Sample {
                    current_a: s.current_a + di,
                    voltage_v: s.voltage_v.map(|v| v + dv),
                    ..*s
                }
            })
            .collect();
        TelemetrySeries::new(samples, series.metadata.clone())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-stream RNG derived from a base seed and a key
/// (e.g. a temperature), independent of evaluation order.
pub fn stream_rng(seed: u64, key: f64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(key.to_bits())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn drive_cycle_spans_duration() {
        let segs = DriveCycle::default().segments(5.0, 108_000.0).unwrap();
        let total: f64 = segs.iter().map(|s| s.1).sum();
        assert!((total - 108_000.0).abs() < 1e-6);
        // Net charge over whole blocks matches the depletion rate.
        let cycle = DriveCycle::default();
        let block: Vec<_> = cycle.segments(5.0, 1e9).unwrap().into_iter().take(4).collect();
        let len: f64 = block.iter().map(|s| s.1).sum();
        let charge: f64 = block.iter().map(|s| s.0 * s.1).sum();
        assert!((charge / (5.0 * 3600.0) - 0.01 * len / 3600.0).abs() < 1e-12);
    }

    #[test]
    fn synthesize_matches_simulation() {
        let model = presets::graphene_5ah();
        let (p, c) = model.at(25.0);
        let drive = [(5.0, 10.0), (0.0, 20.0), (-2.0, 5.5)];
        let run = synthesize(&p, &c, 25.0, &CellState::at_rest(0.8), &drive, 1.0).unwrap();
        let sim = crate::cell_model::simulate(&p, &c, &CellState::at_rest(0.8), &drive).unwrap();
        let end = run.truth.last().unwrap();
        assert!((end.soc - sim.last().unwrap().state.soc).abs() < 1e-12);
        assert!((end.u1_v - sim.last().unwrap().state.u1_v).abs() < 1e-12);
        assert_eq!(run.telemetry.len(), 10 + 20 + 6 + 1);
        // Load is applied at the first sample: instantaneous R0 drop.
        let s0 = run.telemetry.samples()[0];
        assert!((s0.voltage_v.unwrap() - (c.voltage(0.8) - 5.0 * p.r0_ohm())).abs() < 1e-12);
    }

    #[test]
    fn noise_is_seeded() {
        let model = presets::graphene_5ah();
        let (p, c) = model.at(10.0);
        let run = synthesize(&p, &c, 10.0, &CellState::at_rest(0.5), &[(1.0, 100.0)], 1.0).unwrap();
        let noise = NoiseSpec {
            current_sigma_a: 0.01,
            voltage_sigma_v: 0.005,
        };
        let a = noise.apply(&run.telemetry, &mut stream_rng(7, 10.0)).unwrap();
        let b = noise.apply(&run.telemetry, &mut stream_rng(7, 10.0)).unwrap();
        let c2 = noise.apply(&run.telemetry, &mut stream_rng(7, 25.0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c2);
        assert_ne!(a, run.telemetry);
    }
}
