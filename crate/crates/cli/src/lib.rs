//! Command-line surface of the `sifa` estimator: flag and config parsing,
//! matrix and report file formats, and the five commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod data;
pub mod error;
pub mod matrix_io;
pub mod report;

pub use commands::run;
pub use error::{CliError, CliResult};
