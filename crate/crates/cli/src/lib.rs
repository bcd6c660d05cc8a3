//! Command-line pipeline: corpus preparation, embedding, whitening,
//! demonstration retrieval, prompting, generation and evaluation, with run
//! manifests for reproducibility.

pub mod commands;
pub mod config;
pub mod embed;
pub mod error;
pub mod io;
pub mod manifest;
pub mod stages;

pub use commands::run;
pub use config::Config;
pub use error::{CliError, CliResult, ErrorKind};
