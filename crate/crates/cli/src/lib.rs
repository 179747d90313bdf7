//! Command-line and HTTP front end for tracelens.

pub mod cli;
pub mod commands;
pub mod repl;
pub mod server;
