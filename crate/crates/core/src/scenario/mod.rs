//! JSON-configured experiment runner.
//!
//! A scenario names a grid, constants, a potential, an initial state, an
//! evolution schedule and a list of tasks. Running it writes the requested
//! artifacts plus `manifest.json` into the output directory.

pub mod config;
mod run;

pub use config::{
    config_schema, load_config, parse_config, parse_config_with, Overrides, ScenarioConfig, Task,
};
pub use run::{inspect_checkpoint, run_scenario, Check, FileEntry, Inspection, Manifest, RunOptions, RunSummary};

use crate::error::Error;

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Json(_) => 1,
        Error::Io(_) | Error::Csv(_) | Error::Format(_) => 3,
        _ => 2,
    }
}
