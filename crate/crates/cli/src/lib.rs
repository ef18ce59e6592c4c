//! Scenario runner: parses a TOML scenario, solves each incident mode once,
//! and writes correlation tables with a run manifest.

pub mod cache;
pub mod config;
pub mod run;
