//! Configuration, file formats and experiment commands for `vortlab`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod snapshot;

pub use commands::{run, Options};
pub use config::{parse_config, serialize_config, Command, RunConfig};
