//! File formats, configuration, parallel ensembles and the `timebin-cert`
//! command line on top of `timebin-core`.

pub mod commands;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod manifest;

pub use error::CliError;
