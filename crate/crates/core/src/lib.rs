//! Airborne optical sectioning: synthetic-aperture integration of drone
//! camera arrays, RX color-anomaly detection, blob tracking, and a
//! procedural forest simulator with exact ground truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod anomaly;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod integrator;
pub mod metrics;
pub mod raster;
pub mod simulator;
pub mod tracker;

pub use error::{Error, Result};
