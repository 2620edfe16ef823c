//! Command-line front end for the solver crate: configuration parsing,
//! solve/experiment dispatch, and table/scan emission.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::run_command;
