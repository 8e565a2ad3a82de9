//! Simulation and certification toolkit for boundary-controlled thermal
//! dynamics of a battery module modelled as a 1D parabolic PDE.
//!
//! The crate covers the finite-difference plant, the boundary controllers,
//! the gain verifier, safety and stability functionals with their runtime
//! monitors, the anomaly models, and scenario/trajectory I/O.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomalies;
pub mod certify;
pub mod compare;
pub mod control;
pub mod convergence;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod output;
pub mod profile;
pub mod scenario;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
