//! Power-flow sensitivities with respect to network admittance parameters.
//!
//! The crate solves the AC power flow, differentiates the solution
//! (voltages, branch and shunt currents, line flows) with respect to the
//! complex admittance of every branch and shunt through the implicit
//! function theorem, and uses those derivatives to predict topology
//! changes, regulate voltage by continuous admittance control and pick
//! switching configurations.

pub mod cases;
pub mod cli;
pub mod control;
pub mod error;
pub mod fdoracle;
pub mod linalg;
pub mod netmodel;
pub mod pfsolve;
pub mod predictor;
pub mod sensitivity;

pub use error::{Error, Result};
