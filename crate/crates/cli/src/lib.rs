//! Configuration, commands and output formats of the `esbgk` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_check, cmd_converge, cmd_run, CliError, Invocation};
pub use config::{parse_config, parse_with_env, ConfigError, RunConfig};
