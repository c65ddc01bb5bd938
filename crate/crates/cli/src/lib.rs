//! Scenario runner for the `cwarp` binary: TOML scenarios in, result records
//! and trace files out.

pub mod commands;
pub mod config;
pub mod record;
