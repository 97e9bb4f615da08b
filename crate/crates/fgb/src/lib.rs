//! File formats, benchmark protocols and the command-line front end for
//! [`fgb_core`].
//!
//! - [`config`]: the TOML run configuration.
//! - [`bench`]: repeated-run studies, parallel over repetitions.
//! - [`records`]: JSON records, summary tables and scatter files.
//! - [`model_io`]: saving and loading trained flows.
//! - [`check`]: the fast invariant suite.
//! - [`cli`]: argument parsing and subcommands.

pub mod bench;
pub mod check;
pub mod cli;
pub mod config;
mod error;
pub mod model_io;
pub mod records;

pub use error::{AppError, AppResult};
