//! Library side of the `clonesel` command: configuration, output writers
//! and the subcommands.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{reproduce, simulate, verify, Check, Figure, RunReport, Suite};
pub use config::{parse_config, ModelSource, RunConfig};
pub use error::{CliError, Result};
