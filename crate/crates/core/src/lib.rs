//! Classical and simulated-quantum ADPAAD sequence anomaly detection.
//!
//! The classical pipeline ([`classical`]) computes PAAD representations,
//! pairwise similarities and anomaly scores exactly. The quantum pipeline
//! ([`qadpaad`]) runs the same computation on a hybrid state simulator
//! ([`statevector`]) with fixed-point data registers ([`qarith`]) and
//! amplitude amplification/estimation ([`qprimitives`]). [`analysis`] turns
//! the error and cost analysis into executable checks.

pub mod analysis;
pub mod classical;
pub mod error;
pub mod exec;
pub mod qadpaad;
pub mod qarith;
pub mod qprimitives;
pub mod report;
pub mod statevector;
pub mod timeseries;

pub use error::{Error, Result};
pub use exec::Parallelism;
