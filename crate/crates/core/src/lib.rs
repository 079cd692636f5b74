//! Secrecy-rate maximization toolkit for an IRS-assisted dual-function
//! radar-communication system: physical model, exact metrics, the
//! fractional-programming machinery, both alternating-optimization
//! sub-problems, and the outer loop.

pub mod metrics;
pub mod scenario;
pub mod fractional;
pub mod beamformer;
pub mod irs_design;
pub mod optimizer;
