//! Library half of the `sphereflow` command-line tool: configuration,
//! dataset ingestion, checkpoint format and the four subcommands.

// `!(x > 0.0)` is used on purpose so NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;

pub use error::{CliError, Result};
