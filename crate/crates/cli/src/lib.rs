//! Command-line driver for `sadovskii-core`: configuration, file formats,
//! JSON reports and the `solve`, `oracle`, `evolve` and `verify` commands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod formats;
pub mod report;
