//! Command-line front end: file ingestion, run configuration and output
//! documents for the `covmatch` binary.

pub mod commands;
pub mod io;
pub mod output;
pub mod spec;
