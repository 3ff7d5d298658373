//! Command-line layer for `firasym`: JSON configuration, dataset files and
//! the `simulate`, `estimate`, `verify` and `report` subcommands.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 configuration error,
//! 3 I/O error.

pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod error;

pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_FAIL, EXIT_IO, EXIT_PASS};
