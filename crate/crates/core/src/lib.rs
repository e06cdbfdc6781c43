//! State-of-charge estimation for lithium cells.
//!
//! A second-order RC equivalent-circuit model with temperature-dependent
//! parameters, a Coulomb counter and an extended Kalman filter over the
//! model state, HPPC-based parameter identification, and a multi-temperature
//! comparison harness.
//!
//! Sign convention: current is positive on discharge.

pub mod cell_model;
pub mod cli;
pub mod data_io;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod hppc;
pub mod presets;
pub mod synthetic;

pub use cell_model::{CellModel, CellParams, CellParamsTable, CellState, OcvCurve, OcvCurveSet, RcBranch};
pub use data_io::{Sample, TelemetrySeries};
pub use error::{Error, ErrorCategory, Result};
pub use estimators::{EkfBelief, EkfConfig, EstimateTrace};
