//! File formats, configuration and the command-line harness around
//! `transmtt-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod render;
pub mod report;

pub use commands::{run, Cli, Command};

/// Recorded in every manifest and checkpoint.
pub const CODE_VERSION: &str = concat!("transmtt ", env!("CARGO_PKG_VERSION"));
