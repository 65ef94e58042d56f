//! Estimation of trace-preserving quantum channels from yes/no measurement
//! data on known probe states.
//!
//! The crate covers the χ representation of channels and its minimal
//! trace-preserving parametrization, experiment design and identifiability
//! of probe/measurement settings, the direct inversion estimator, and a
//! maximum-likelihood estimator solved by a log-det barrier Newton method.

pub mod channel;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod linalg;

pub use error::{Error, Result};
