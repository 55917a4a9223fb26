//! Pseudo-spectral 2D periodic Navier–Stokes solver with discrete-in-time
//! nudging data assimilation, observation operators, and time-average
//! statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod spectral;

pub use error::{Error, Result};
pub mod experiment;
pub mod nudging;
pub mod observers;
pub mod snapshot;
pub mod solver;
pub mod statistics;
