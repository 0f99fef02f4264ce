//! Command-line front end: configuration, file formats, commands and reports.

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;

pub use config::{Command, RunConfig};
pub use error::{Category, CliError};
pub use report::{Report, SCHEMA_VERSION};
pub use run::run;
