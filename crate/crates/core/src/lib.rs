//! Numerical laboratory for the sharp-interface limit of the one-dimensional
//! Cahn-Hilliard equation on the unit torus.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod field;
pub mod potential;
pub mod preparation;

pub use dynamics::{run_cahn_hilliard, run_stefan, LedgerRecord, SolverConfig, Trajectory};
pub use error::{Error, Result};
pub use field::{PeriodicField, SpectralWorkspace};
pub use potential::{Interval, PotentialModel};
