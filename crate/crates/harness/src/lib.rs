//! Experiment orchestration for the multi-object navigation stack: run
//! configuration, episode datasets, evaluation protocols and reports.

pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod runner;
pub mod training;

pub use error::HarnessError;
