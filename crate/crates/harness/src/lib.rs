//! Experiment orchestration for `relay-core`: config files, a file-backed
//! result store, the verification suites and static reports.

pub mod config;
mod error;
pub mod instances;
pub mod report;
pub mod run;
pub mod store;
pub mod verify;

pub use error::{Error, Result};
