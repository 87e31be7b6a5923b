//! CSV ingestion, TOML run specifications, parallel drivers, reports and
//! the command-line workflows built on `didweak-core`.

pub mod commands;
pub mod csv_io;
pub mod error;
pub mod parallel;
pub mod report;
pub mod spec_file;
pub mod synthetic;

pub use commands::{run, Options};
pub use error::{CliError, Result};
pub use spec_file::{Command, SpecFile};
