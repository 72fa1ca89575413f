//! Sliding mode observers for set-valued Lur'e systems.
//!
//! * [`set_valued`]: monotone set-valued maps, selections, and continuous
//!   sign approximations including the time-guided `Sign_δ`.
//! * [`lure_model`]: the plant and its block decomposition.
//! * [`observer_design`]: checks of candidate gains and convergence
//!   certificates.
//! * [`simulate`]: fixed-step co-simulation and chattering metrics.
//! * [`experiments`]: the reproducible example runs behind the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lure_model;
pub mod observer_design;
pub mod set_valued;
pub mod simulate;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
