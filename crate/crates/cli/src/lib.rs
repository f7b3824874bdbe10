//! File formats, commands and the self-test suite behind the `hgsg` tool.

pub mod commands;
pub mod error;
pub mod formats;
pub mod selftest;

pub use error::{CliError, Result};
