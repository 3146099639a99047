//! Two-vessel curved-path formation control: line-of-sight guidance for the
//! barycenter inside a null-space-based task hierarchy, tracked by adaptive
//! surge and heading autopilots.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod autopilot;
pub mod error;
pub mod nsb;
pub mod output;
pub mod path;
pub mod scenario;
pub mod sim;
pub mod vessel;

pub use error::{Error, Result};
