//! Built-in demo cell: a 5 Ah high-rate graphene LiPo pouch characterised
//! at 0, 10, 25 and 40 °C.
//!
//! The numbers are representative, not measured. They are used by the
//! examples, the synthetic sweep defaults and the test-suite.

use crate::cell_model::{CellModel, CellParams, CellParamsTable, OcvCurve, OcvCurveSet, RcBranch};

pub const DEMO_CAPACITY_AH: f64 = 5.0;
pub const DEMO_TEMPERATURES_C: [f64; 4] = [0.0, 10.0, 25.0, 40.0];

const BASE_OCV: [(f64, f64); 12] = [
    (0.0, 3.000),
    (0.05, 3.450),
    (0.1, 3.600),
    (0.2, 3.680),
    (0.3, 3.730),
    (0.4, 3.780),
    (0.5, 3.830),
    (0.6, 3.890),
    (0.7, 3.960),
    (0.8, 4.040),
    (0.9, 4.110),
    (1.0, 4.200),
];

/// OCV curve at 25 °C.
pub fn demo_ocv() -> OcvCurve {
    OcvCurve::new(BASE_OCV.to_vec()).expect("demo curve is valid")
}

fn shifted_ocv(offset_v: f64) -> OcvCurve {
    OcvCurve::new(BASE_OCV.iter().map(|&(s, v)| (s, v + offset_v)).collect()).expect("shift keeps monotonicity")
}

/// Per-temperature curves on a shared SOC grid.
pub fn demo_ocv_set() -> OcvCurveSet {
    OcvCurveSet::new(vec![
        (0.0, shifted_ocv(-0.020)),
        (10.0, shifted_ocv(-0.010)),
        (25.0, shifted_ocv(0.0)),
        (40.0, shifted_ocv(0.005)),
    ])
    .expect("demo set is valid")
}

fn entry(temp_c: f64, r0: f64, r1: f64, tau1: f64, r2: f64, tau2: f64) -> CellParams {
    CellParams::new(
        temp_c,
        DEMO_CAPACITY_AH,
        r0,
        RcBranch::new(r1, tau1 / r1),
        RcBranch::new(r2, tau2 / r2),
    )
    .expect("demo parameters are valid")
}

/// Parameter table. R0 at 0 °C is twice its 25 °C value.
pub fn demo_params() -> CellParamsTable {
    CellParamsTable::new(
        "graphene-5000mAh",
        vec![
            entry(0.0, 0.0080, 0.0030, 12.0, 0.0060, 150.0),
            entry(10.0, 0.0060, 0.0025, 10.0, 0.0050, 120.0),
            entry(25.0, 0.0040, 0.0020, 8.0, 0.0040, 100.0),
            entry(40.0, 0.0035, 0.0018, 7.0, 0.0038, 90.0),
        ],
    )
    .expect("demo table is valid")
}

/// The demo cell as a complete model.
pub fn graphene_5ah() -> CellModel {
    CellModel::new(demo_params(), demo_ocv_set())
}
