//! Configuration, tabular output and plotting behind the `qbm` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;
pub mod table;

pub use error::CliError;
