//! Command-line front end for `gw-core`: file formats, run reports, the
//! Monte Carlo harness behind `gw mc-clt`, and the multivariate-t demo.

pub mod commands;
pub mod elliptic;
pub mod error;
pub mod harness;
pub mod io;
pub mod report;

pub use commands::{run, Cli, Command};
pub use error::{CliError, CliResult};
pub use report::{Check, Report};
