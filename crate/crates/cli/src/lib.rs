//! Configuration, orchestration and export for the `floqnoise` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;

pub use config::{parse_config, parse_str, SimulationConfig};
pub use error::{CliError, Stage};
pub use pipeline::{run_pipeline, RunOptions, RunOutput, RunSummary};
pub use plot::emit_plot;
