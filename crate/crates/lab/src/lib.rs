//! Experiment runner for `riesz-lab-core`: configuration, a threaded
//! executor, the identity suite and report writing behind the `riesz-lab`
//! binary.

pub mod commands;
pub mod config;
pub mod exec;
pub mod identity;
pub mod report;
