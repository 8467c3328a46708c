//! Gaussian-process interference prediction and proactive finite-blocklength
//! resource allocation for a quasi-static indoor downlink.
//!
//! The pipeline: [`channel`] simulates correlated Rayleigh interference, [`predict`]
//! forecasts the next slot's interference, [`fbl`] turns a predicted SINR into a
//! blocklength, and [`alloc`] runs the slot loop and measures the achieved outage
//! against the target. [`harness`] wires these into reproducible experiments.

pub mod alloc;
pub mod channel;
pub mod config;
pub mod error;
pub mod fbl;
pub mod gp;
pub mod harness;
pub mod predict;
pub mod seed;
pub mod units;

pub use error::{Error, Result};
