//! Front end for `naim-core`: run configuration, an expression language for user-defined
//! slow-fast fields, the subcommand pipelines and their CSV/JSON artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod field;
pub mod output;

pub use commands::{Command, Runner};
pub use config::RunConfig;
pub use error::CliError;
