//! Configuration, orchestration and export behind the `jumpreach` binary.

pub mod config;
pub mod export;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{Manifest, Overrides, RunError, SolveFlags};
