//! File formats, reports and the command line around `cppg-core`.

pub mod binfmt;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod recordings;
pub mod report;

pub use error::{Error, Result};
