pub mod commands;
pub mod config;
pub mod output;

pub use commands::{Overrides, Run};
pub use config::{ConfigError, RunConfig};
