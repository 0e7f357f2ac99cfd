//! Library side of the `nsnewton` binary: run records, config files and the
//! report builders behind each subcommand.

pub mod commands;
pub mod config;
pub mod record;

pub use config::{parse_vector, ConfigFile};
pub use record::{csv_trace, RunRecord, Timestamps, TraceSummary, SCHEMA_VERSION};
