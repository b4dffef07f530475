//! Capacitated k-median solvers: exact transportation mapping, uncapacitated
//! seeds, the ℓ-centered reduction, parameterized and tree-based solvers,
//! brute-force oracles and an experiment harness.

pub mod centered;
pub mod error;
pub mod fpt;
pub mod harness;
pub mod instance;
pub mod oracle;
pub mod rng;
pub mod transport;
pub mod tree;
pub mod uncap;

pub use error::{CkmError, Result};
pub use instance::{Assignment, Facility, Instance, Metric, PointId, TOLERANCE};
