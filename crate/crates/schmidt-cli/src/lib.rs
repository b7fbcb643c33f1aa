//! Configuration for the `schmidt` command-line tool.

pub mod config;
