//! File formats, run configuration and the staged pipeline behind the
//! `empdyn` command.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
