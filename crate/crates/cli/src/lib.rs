//! Experiment harness and CLI plumbing for the secrecy-rate design
//! pipeline.

pub mod config;
pub mod experiments;
