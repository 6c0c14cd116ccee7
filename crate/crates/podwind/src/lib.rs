//! File formats, study harness and command-line front end for `podwind-core`.

pub mod archive;
pub mod cli;
pub mod config;
pub mod error;
pub mod kv;
pub mod records;
pub mod report;
pub mod study;

pub use error::{Error, Result};
