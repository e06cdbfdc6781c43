//! Second-order RC equivalent-circuit cell.
//!
//! The cell is an OCV source in series with an ohmic resistance and two RC
//! branches. The state is `[soc, u1, u2]`, where `u1`/`u2` are the voltages
//! across the fast (activation) and slow (concentration) branches.
//!
//! Sign convention: positive current is **discharge**. SOC therefore falls
//! as `d soc/dt = -I / Q`, and the terminal voltage sags under load:
//!
//! ```text
//! V = OCV(soc) - u1 - u2 - I * R0
//! ```
//!
//! Branch voltages are discretized with the exact zero-order-hold solution,
//! so a step is exact for piecewise-constant current regardless of `dt`.

use std::borrow::Cow;

use nalgebra::{Matrix3, Vector3};

use crate::error::{ensure_finite, Error, Result};

/// Ampere-seconds per ampere-hour.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// One RC polarization branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcBranch {
    pub r_ohm: f64,
    pub c_farad: f64,
}

impl RcBranch {
    pub fn new(r_ohm: f64, c_farad: f64) -> Self {
        Self { r_ohm, c_farad }
    }

    /// Time constant `R * C` in seconds.
    pub fn tau_s(&self) -> f64 {
        self.r_ohm * self.c_farad
    }
}

/// ECM parameters at a single temperature.
///
/// Construction validates positivity and orders the two branches so that the
/// first one is the faster (`tau1 <= tau2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    temp_c: f64,
    capacity_ah: f64,
    r0_ohm: f64,
    fast: RcBranch,
    slow: RcBranch,
}

impl CellParams {
    pub fn new(temp_c: f64, capacity_ah: f64, r0_ohm: f64, branch_a: RcBranch, branch_b: RcBranch) -> Result<Self> {
        let check = |name: &str, v: f64| -> Result<()> {
            if !v.is_finite() {
                return Err(Error::validation(name, format!("must be finite, got {v}")));
            }
            if v <= 0.0 {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
            Ok(())
        };
        if !temp_c.is_finite() {
            return Err(Error::validation("temp_c", format!("must be finite, got {temp_c}")));
        }
        check("capacity_ah", capacity_ah)?;
        check("r0_ohm", r0_ohm)?;
        check("r1_ohm", branch_a.r_ohm)?;
        check("c1_farad", branch_a.c_farad)?;
        check("r2_ohm", branch_b.r_ohm)?;
        check("c2_farad", branch_b.c_farad)?;
        for (name, b) in [("tau1", branch_a), ("tau2", branch_b)] {
            let tau = b.tau_s();
            if !tau.is_finite() || tau <= 0.0 {
                return Err(Error::validation(
                    name,
                    format!("time constant must be finite and positive, got {tau}"),
                ));
            }
        }
        let (fast, slow) = if branch_a.tau_s() <= branch_b.tau_s() {
            (branch_a, branch_b)
        } else {
            (branch_b, branch_a)
        };
        Ok(Self {
            temp_c,
            capacity_ah,
            r0_ohm,
            fast,
            slow,
        })
    }

    pub fn temp_c(&self) -> f64 {
        self.temp_c
    }
    pub fn capacity_ah(&self) -> f64 {
        self.capacity_ah
    }
    /// Capacity in ampere-seconds.
    pub fn capacity_as(&self) -> f64 {
        self.capacity_ah * SECONDS_PER_HOUR
    }
    pub fn r0_ohm(&self) -> f64 {
        self.r0_ohm
    }
    pub fn r1_ohm(&self) -> f64 {
        self.fast.r_ohm
    }
    pub fn c1_farad(&self) -> f64 {
        self.fast.c_farad
    }
    pub fn r2_ohm(&self) -> f64 {
        self.slow.r_ohm
    }
    pub fn c2_farad(&self) -> f64 {
        self.slow.c_farad
    }
    pub fn tau1_s(&self) -> f64 {
        self.fast.tau_s()
    }
    pub fn tau2_s(&self) -> f64 {
        self.slow.tau_s()
    }
    pub fn fast_branch(&self) -> RcBranch {
        self.fast
    }
    pub fn slow_branch(&self) -> RcBranch {
        self.slow
    }

    /// Same parameters re-labelled for another temperature.
    pub fn with_temp(mut self, temp_c: f64) -> Self {
        self.temp_c = temp_c;
        self
    }

    /// Same parameters with a different ohmic resistance.
    pub fn with_r0(self, r0_ohm: f64) -> Result<Self> {
        Self::new(self.temp_c, self.capacity_ah, r0_ohm, self.fast, self.slow)
    }
}

/// Parameters indexed by temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParamsTable {
    cell: String,
    capacity_ah: f64,
    entries: Vec<CellParams>,
}

impl CellParamsTable {
    /// Entries must be sorted by strictly increasing temperature and share a
    /// single capacity.
    pub fn new(cell: impl Into<String>, entries: Vec<CellParams>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::validation("entries", "at least one entry is required"))?;
        let capacity_ah = first.capacity_ah;
        for (i, pair) in entries.windows(2).enumerate() {
            if pair[1].temp_c <= pair[0].temp_c {
                return Err(Error::validation(
                    format!("entries[{}].temp_c", i + 1),
                    format!(
                        "temperatures must be strictly increasing ({} after {})",
                        pair[1].temp_c, pair[0].temp_c
                    ),
                ));
            }
        }
        for (i, e) in entries.iter().enumerate() {
            if e.capacity_ah != capacity_ah {
                return Err(Error::validation(
                    format!("entries[{i}].capacity_ah"),
                    "all entries must share the table capacity",
                ));
            }
        }
        Ok(Self {
            cell: cell.into(),
            capacity_ah,
            entries,
        })
    }

    pub fn cell(&self) -> &str {
        &self.cell
    }
    pub fn capacity_ah(&self) -> f64 {
        self.capacity_ah
    }
    pub fn entries(&self) -> &[CellParams] {
        &self.entries
    }

    /// Parameters at `temp_c`: per-field linear interpolation between the
    /// bracketing entries, clamped to the end entries outside the range.
    pub fn params_at(&self, temp_c: f64) -> CellParams {
        let entries = &self.entries;
        let first = entries[0];
        let last = entries[entries.len() - 1];
        if temp_c.is_nan() || temp_c <= first.temp_c {
            return first;
        }
        if temp_c >= last.temp_c {
            return last;
        }
        let hi = entries.partition_point(|e| e.temp_c <= temp_c);
        let (a, b) = (entries[hi - 1], entries[hi]);
        if temp_c == a.temp_c {
            return a;
        }
        let w = (temp_c - a.temp_c) / (b.temp_c - a.temp_c);
        let lerp = |x: f64, y: f64| x + w * (y - x);
        CellParams::new(
            temp_c,
            lerp(a.capacity_ah, b.capacity_ah),
            lerp(a.r0_ohm, b.r0_ohm),
            RcBranch::new(lerp(a.fast.r_ohm, b.fast.r_ohm), lerp(a.fast.c_farad, b.fast.c_farad)),
            RcBranch::new(lerp(a.slow.r_ohm, b.slow.r_ohm), lerp(a.slow.c_farad, b.slow.c_farad)),
        )
        .expect("convex combination of valid parameters is valid")
    }
}

/// Monotone SOC -> OCV breakpoint table.
#[derive(Debug, Clone, PartialEq)]
pub struct OcvCurve {
    points: Vec<(f64, f64)>,
}

impl OcvCurve {
    /// `points` are `(soc, ocv_v)` pairs. SOC must run from exactly 0 to
    /// exactly 1 and both columns must be strictly increasing.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::validation("points", "at least 2 breakpoints are required"));
        }
        for (i, &(soc, v)) in points.iter().enumerate() {
            if !soc.is_finite() || !v.is_finite() {
                return Err(Error::validation(format!("points[{i}]"), "values must be finite"));
            }
        }
        if points[0].0 != 0.0 {
            return Err(Error::validation("points[0][0]", "soc must start at 0"));
        }
        let last = points.len() - 1;
        if points[last].0 != 1.0 {
            return Err(Error::validation(format!("points[{last}][0]"), "soc must end at 1"));
        }
        for i in 1..points.len() {
            if points[i].0 <= points[i - 1].0 {
                return Err(Error::validation(
                    format!("points[{i}][0]"),
                    "soc must be strictly increasing",
                ));
            }
            if points[i].1 <= points[i - 1].1 {
                return Err(Error::validation(
                    format!("points[{i}][1]"),
                    "ocv must be strictly increasing",
                ));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    // Index of the segment [i, i+1] containing soc, for soc in [0, 1).
    fn segment(&self, soc: f64) -> usize {
        let idx = self.points.partition_point(|p| p.0 <= soc);
        idx.clamp(1, self.points.len() - 1) - 1
    }

    fn segment_slope(&self, i: usize) -> f64 {
        let (s0, v0) = self.points[i];
        let (s1, v1) = self.points[i + 1];
        (v1 - v0) / (s1 - s0)
    }

    /// OCV at `soc` by linear interpolation; clamps outside `[0, 1]`.
    pub fn voltage(&self, soc: f64) -> f64 {
        if soc.is_nan() {
            return f64::NAN;
        }
        let n = self.points.len();
        if soc <= 0.0 {
            return self.points[0].1;
        }
        if soc >= 1.0 {
            return self.points[n - 1].1;
        }
        let i = self.segment(soc);
        let (s0, v0) = self.points[i];
        v0 + (soc - s0) * self.segment_slope(i)
    }

    /// dOCV/dSOC. Right-continuous at breakpoints, the last segment's slope
    /// at `soc == 1`, and zero outside `[0, 1]` where the lookup is clamped.
    pub fn slope(&self, soc: f64) -> f64 {
        if !(0.0..=1.0).contains(&soc) {
            return 0.0;
        }
        if soc == 1.0 {
            return self.segment_slope(self.points.len() - 2);
        }
        self.segment_slope(self.segment(soc))
    }

    /// Inverse lookup: the SOC whose OCV equals `ocv_v`, clamped to `[0, 1]`.
    pub fn soc_for_voltage(&self, ocv_v: f64) -> f64 {
        let n = self.points.len();
        if ocv_v <= self.points[0].1 {
            return 0.0;
        }
        if ocv_v >= self.points[n - 1].1 {
            return 1.0;
        }
        let idx = self.points.partition_point(|p| p.1 <= ocv_v);
        let i = idx.clamp(1, n - 1) - 1;
        let (s0, v0) = self.points[i];
        (s0 + (ocv_v - v0) / self.segment_slope(i)).clamp(0.0, 1.0)
    }
}

/// OCV curves measured at several temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct OcvCurveSet {
    curves: Vec<(f64, OcvCurve)>,
}

impl OcvCurveSet {
    /// `curves` are `(temp_c, curve)` pairs with strictly increasing temperature.
    pub fn new(curves: Vec<(f64, OcvCurve)>) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::validation("curves", "at least one curve is required"));
        }
        for (i, (t, _)) in curves.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::validation(format!("curves[{i}].temp_c"), "must be finite"));
            }
            if i > 0 && *t <= curves[i - 1].0 {
                return Err(Error::validation(
                    format!("curves[{i}].temp_c"),
                    "temperatures must be strictly increasing",
                ));
            }
        }
        Ok(Self { curves })
    }

    pub fn single(temp_c: f64, curve: OcvCurve) -> Self {
        Self {
            curves: vec![(temp_c, curve)],
        }
    }

    pub fn curves(&self) -> &[(f64, OcvCurve)] {
        &self.curves
    }

    /// Curve at `temp_c`. Adjacent curves sharing a SOC grid are blended
    /// per breakpoint; otherwise the nearest-temperature curve is used.
    /// Outside the measured range the end curve is returned.
    pub fn at(&self, temp_c: f64) -> Cow<'_, OcvCurve> {
        let n = self.curves.len();
        if n == 1 || temp_c.is_nan() || temp_c <= self.curves[0].0 {
            return Cow::Borrowed(&self.curves[0].1);
        }
        if temp_c >= self.curves[n - 1].0 {
            return Cow::Borrowed(&self.curves[n - 1].1);
        }
        let hi = self.curves.partition_point(|c| c.0 <= temp_c);
        let (ta, a) = (&self.curves[hi - 1].0, &self.curves[hi - 1].1);
        let (tb, b) = (&self.curves[hi].0, &self.curves[hi].1);
        if temp_c == *ta {
            return Cow::Borrowed(a);
        }
        let w = (temp_c - ta) / (tb - ta);
        let same_grid = a.points.len() == b.points.len() && a.points.iter().zip(&b.points).all(|(p, q)| p.0 == q.0);
        if same_grid {
            let points = a
                .points
                .iter()
                .zip(&b.points)
                .map(|(p, q)| (p.0, p.1 + w * (q.1 - p.1)))
                .collect();
            Cow::Owned(OcvCurve { points })
        } else if w <= 0.5 {
            Cow::Borrowed(a)
        } else {
            Cow::Borrowed(b)
        }
    }
}

/// True or estimated cell state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellState {
    pub soc: f64,
    pub u1_v: f64,
    pub u2_v: f64,
}

impl CellState {
    pub fn new(soc: f64, u1_v: f64, u2_v: f64) -> Self {
        Self { soc, u1_v, u2_v }
    }

    /// A fully relaxed cell at `soc`.
    pub fn at_rest(soc: f64) -> Self {
        Self::new(soc, 0.0, 0.0)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.soc, self.u1_v, self.u2_v)
    }

    pub fn from_vector(x: &Vector3<f64>) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub(crate) fn clamped(mut self) -> Self {
        self.soc = self.soc.clamp(0.0, 1.0);
        self
    }
}

/// Discrete-time linear state map `x' = A x + B I` for one step of length `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateTransition {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
}

impl StateTransition {
    /// Applies the map without clamping.
    pub fn apply(&self, state: CellState, current_a: f64) -> CellState {
        // Diagonal A: written out so the result is bit-identical to `a * x + b * i`.
        CellState::new(
            self.a[(0, 0)] * state.soc + self.b[0] * current_a,
            self.a[(1, 1)] * state.u1_v + self.b[1] * current_a,
            self.a[(2, 2)] * state.u2_v + self.b[2] * current_a,
        )
    }
}

/// Transition matrices for state order `[soc, u1, u2]` and input `I`
/// (discharge-positive).
pub fn state_transition(params: &CellParams, dt_s: f64) -> Result<StateTransition> {
    ensure_finite("dt_s", dt_s)?;
    if dt_s <= 0.0 {
        return Err(Error::InvalidInput(format!("dt_s must be positive, got {dt_s}")));
    }
    let e1 = (-dt_s / params.tau1_s()).exp();
    let e2 = (-dt_s / params.tau2_s()).exp();
    let a = Matrix3::from_diagonal(&Vector3::new(1.0, e1, e2));
    let b = Vector3::new(
        -dt_s / params.capacity_as(),
        params.r1_ohm() * (1.0 - e1),
        params.r2_ohm() * (1.0 - e2),
    );
    Ok(StateTransition { a, b })
}

/// Terminal voltage for `state` while `current_a` flows.
pub fn terminal_voltage(params: &CellParams, curve: &OcvCurve, state: &CellState, current_a: f64) -> f64 {
    curve.voltage(state.soc) - state.u1_v - state.u2_v - current_a * params.r0_ohm()
}

/// Advances the cell by `dt_s` under constant `current_a`. Returns the new
/// state and the terminal voltage at the end of the step.
pub fn step(
    params: &CellParams,
    curve: &OcvCurve,
    state: &CellState,
    current_a: f64,
    dt_s: f64,
) -> Result<(CellState, f64)> {
    ensure_finite("current_a", current_a)?;
    ensure_finite("soc", state.soc)?;
    ensure_finite("u1_v", state.u1_v)?;
    ensure_finite("u2_v", state.u2_v)?;
    let next = state_transition(params, dt_s)?.apply(*state, current_a).clamped();
    let v = terminal_voltage(params, curve, &next, current_a);
    Ok((next, v))
}

/// One point of a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub t_s: f64,
    pub state: CellState,
    pub terminal_v: f64,
}

/// Runs `drive` (a sequence of `(current_a, dt_s)` segments) from `initial`.
///
/// The returned trace starts with the initial point at `t = 0` (terminal
/// voltage at zero current) followed by one point per segment.
pub fn simulate(
    params: &CellParams,
    curve: &OcvCurve,
    initial: &CellState,
    drive: &[(f64, f64)],
) -> Result<Vec<TracePoint>> {
    if drive.is_empty() {
        return Err(Error::InvalidInput("drive profile is empty".into()));
    }
    let mut state = initial.clamped();
    let mut t = 0.0;
    let mut trace = Vec::with_capacity(drive.len() + 1);
    trace.push(TracePoint {
        t_s: t,
        state,
        terminal_v: terminal_voltage(params, curve, &state, 0.0),
    });
    for &(current_a, dt_s) in drive {
        let (next, v) = step(params, curve, &state, current_a, dt_s)?;
        t += dt_s;
        state = next;
        trace.push(TracePoint {
            t_s: t,
            state,
            terminal_v: v,
        });
    }
    Ok(trace)
}

/// Parameters and OCV data for one cell across temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct CellModel {
    pub params: CellParamsTable,
    pub ocv: OcvCurveSet,
}

impl CellModel {
    pub fn new(params: CellParamsTable, ocv: OcvCurveSet) -> Self {
        Self { params, ocv }
    }

    pub fn capacity_ah(&self) -> f64 {
        self.params.capacity_ah()
    }

    pub fn at(&self, temp_c: f64) -> (CellParams, Cow<'_, OcvCurve>) {
        (self.params.params_at(temp_c), self.ocv.at(temp_c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(tau1: f64, tau2: f64) -> CellParams {
        let (r1, r2) = (0.005, 0.01);
        CellParams::new(
            25.0,
            5.0,
            0.01,
            RcBranch::new(r1, tau1 / r1),
            RcBranch::new(r2, tau2 / r2),
        )
        .unwrap()
    }

    fn linear() -> OcvCurve {
        OcvCurve::new(vec![(0.0, 3.0), (1.0, 4.2)]).unwrap()
    }

    #[test]
    fn ocv_lookup_examples() {
        let c = linear();
        assert_eq!(c.voltage(0.0), 3.0);
        assert!((c.voltage(0.5) - 3.6).abs() < 1e-12);
        assert_eq!(c.voltage(1.3), 4.2);
        assert_eq!(c.voltage(-0.2), 3.0);
    }

    #[test]
    fn ocv_slope_examples() {
        assert!((linear().slope(0.5) - 1.2).abs() < 1e-12);
        let c = OcvCurve::new(vec![(0.0, 3.0), (0.5, 3.5), (1.0, 4.2)]).unwrap();
        assert!((c.slope(0.5) - 1.4).abs() < 1e-12);
        assert!((c.slope(0.0) - 1.0).abs() < 1e-12);
        assert!((c.slope(1.0) - 1.4).abs() < 1e-12);
        assert_eq!(c.slope(1.2), 0.0);
        assert_eq!(c.slope(-0.1), 0.0);
    }

    #[test]
    fn ocv_inverse() {
        let c = OcvCurve::new(vec![(0.0, 3.0), (0.5, 3.5), (1.0, 4.2)]).unwrap();
        for soc in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert!((c.soc_for_voltage(c.voltage(soc)) - soc).abs() < 1e-12);
        }
    }

    #[test]
    fn ocv_curve_rejects_bad_tables() {
        assert!(OcvCurve::new(vec![(0.0, 3.0)]).is_err());
        assert!(OcvCurve::new(vec![(0.1, 3.0), (1.0, 4.0)]).is_err());
        assert!(OcvCurve::new(vec![(0.0, 3.0), (0.9, 4.0)]).is_err());
        assert!(OcvCurve::new(vec![(0.0, 3.0), (0.5, 2.9), (1.0, 4.0)]).is_err());
        assert!(OcvCurve::new(vec![(0.0, 3.0), (0.5, 3.5), (0.5, 3.6), (1.0, 4.0)]).is_err());
    }

    #[test]
    fn params_sort_branches() {
        let p = CellParams::new(
            0.0,
            5.0,
            0.01,
            RcBranch::new(0.01, 10_000.0),
            RcBranch::new(0.002, 5_000.0),
        )
        .unwrap();
        assert!(p.tau1_s() <= p.tau2_s());
        assert_eq!(p.r1_ohm(), 0.002);
    }

    #[test]
    fn params_reject_non_positive() {
        let err = CellParams::new(0.0, 5.0, -0.01, RcBranch::new(0.01, 1.0), RcBranch::new(0.01, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Validation { ref path, .. } if path == "r0_ohm"));
        assert!(CellParams::new(0.0, 0.0, 0.01, RcBranch::new(0.01, 1.0), RcBranch::new(0.01, 1.0)).is_err());
    }

    fn table() -> CellParamsTable {
        let mk = |t: f64, r0: f64| {
            CellParams::new(
                t,
                5.0,
                r0,
                RcBranch::new(0.004 + t * 1e-5, 2500.0),
                RcBranch::new(0.01, 12_000.0 + t),
            )
            .unwrap()
        };
        CellParamsTable::new(
            "test",
            vec![mk(0.0, 0.02), mk(10.0, 0.015), mk(25.0, 0.01), mk(40.0, 0.009)],
        )
        .unwrap()
    }

    #[test]
    fn params_at_examples() {
        let t = table();
        assert_eq!(t.params_at(25.0), t.entries()[2]);
        assert_eq!(t.params_at(-20.0), t.entries()[0]);
        assert_eq!(t.params_at(80.0), t.entries()[3]);
        let mid = t.params_at(5.0);
        let (a, b) = (t.entries()[0], t.entries()[1]);
        let mean = |x: f64, y: f64| (x + y) / 2.0;
        assert!((mid.r0_ohm() - mean(a.r0_ohm(), b.r0_ohm())).abs() < 1e-15);
        assert!((mid.r1_ohm() - mean(a.r1_ohm(), b.r1_ohm())).abs() < 1e-15);
        assert!((mid.c1_farad() - mean(a.c1_farad(), b.c1_farad())).abs() < 1e-9);
        assert!((mid.r2_ohm() - mean(a.r2_ohm(), b.r2_ohm())).abs() < 1e-15);
        assert!((mid.c2_farad() - mean(a.c2_farad(), b.c2_farad())).abs() < 1e-9);
        assert_eq!(mid.temp_c(), 5.0);
    }

    #[test]
    fn table_rejects_duplicates() {
        let p = table().entries()[0];
        assert!(CellParamsTable::new("x", vec![p, p]).is_err());
        assert!(CellParamsTable::new("x", vec![]).is_err());
    }

    #[test]
    fn step_examples() {
        let p = params(10.0, 100.0);
        let c = linear();
        let (s, _) = step(&p, &c, &CellState::new(0.5, 0.1, 0.0), 0.0, 10.0).unwrap();
        assert!((s.u1_v - 0.1 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((s.u1_v - 0.036788).abs() < 1e-6);
        assert_eq!(s.soc, 0.5);
        let (rest, v) = step(&p, &c, &CellState::at_rest(0.37), 0.0, 1.0).unwrap();
        assert_eq!(rest.soc, 0.37);
        assert_eq!(v, c.voltage(0.37));
        assert!(step(&p, &c, &CellState::at_rest(0.5), f64::NAN, 1.0).is_err());
        assert!(step(&p, &c, &CellState::at_rest(0.5), 1.0, 0.0).is_err());
    }

    #[test]
    fn discharge_depresses_terminal_voltage() {
        let p = params(10.0, 100.0);
        let c = linear();
        let (_, v) = step(&p, &c, &CellState::at_rest(0.5), 5.0, 1.0).unwrap();
        assert!(v < c.voltage(0.5));
    }

    #[test]
    fn simulate_full_discharge() {
        let p = params(10.0, 100.0);
        let trace = simulate(&p, &linear(), &CellState::at_rest(1.0), &vec![(5.0, 1.0); 3600]).unwrap();
        assert_eq!(trace.len(), 3601);
        assert!(trace.last().unwrap().state.soc.abs() < 1e-12);
        assert!((trace.last().unwrap().t_s - 3600.0).abs() < 1e-9);
    }

    #[test]
    fn simulate_rest_decay() {
        let p = params(10.0, 100.0);
        let init = CellState::new(0.6, 0.05, -0.03);
        let trace = simulate(&p, &linear(), &init, &[(0.0, 10.0 * p.tau2_s())]).unwrap();
        let end = trace.last().unwrap().state;
        assert!(end.u1_v.abs() < 1e-4 * 0.05);
        assert!(end.u2_v.abs() < 1e-4 * 0.03);
        assert!(simulate(&p, &linear(), &init, &[]).is_err());
        assert!(simulate(&p, &linear(), &init, &[(1.0, 0.0)]).is_err());
    }

    #[test]
    fn transition_examples() {
        let p = params(10.0, 100.0);
        let tr = state_transition(&p, 1e-9).unwrap();
        assert!((tr.a - Matrix3::identity()).abs().max() < 1e-8);
        assert!(tr.b.abs().max() < 1e-8);
        let tr = state_transition(&p, 10.0).unwrap();
        assert!((tr.a[(1, 1)] - 0.367879).abs() < 1e-6);
        let tr = state_transition(&p, 1.0).unwrap();
        assert!((tr.b[0] + 1.0 / 18000.0).abs() < 1e-18);
    }

    #[test]
    fn transition_matches_matrix_product() {
        let p = params(12.0, 340.0);
        let tr = state_transition(&p, 1.0).unwrap();
        let x = CellState::new(0.43, 0.012, -0.004);
        let via_matrix = tr.a * x.to_vector() + tr.b * 3.3;
        let (stepped, _) = step(&p, &linear(), &x, 3.3, 1.0).unwrap();
        assert_eq!(stepped.to_vector(), via_matrix);
    }

    #[test]
    fn ocv_set_blends_shared_grid() {
        let cold = OcvCurve::new(vec![(0.0, 3.0), (0.5, 3.6), (1.0, 4.1)]).unwrap();
        let warm = OcvCurve::new(vec![(0.0, 3.2), (0.5, 3.8), (1.0, 4.2)]).unwrap();
        let set = OcvCurveSet::new(vec![(0.0, cold.clone()), (20.0, warm.clone())]).unwrap();
        let mid = set.at(10.0);
        assert!((mid.voltage(0.5) - 3.7).abs() < 1e-12);
        assert_eq!(*set.at(-5.0), cold);
        assert_eq!(*set.at(30.0), warm);

        let other = OcvCurve::new(vec![(0.0, 3.2), (1.0, 4.2)]).unwrap();
        let set = OcvCurveSet::new(vec![(0.0, cold.clone()), (20.0, other.clone())]).unwrap();
        assert_eq!(*set.at(4.0), cold);
        assert_eq!(*set.at(16.0), other);
    }
}
