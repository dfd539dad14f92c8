//! File formats, run configuration, experiment pipelines and the
//! command-line front end over `distrans-core`.

pub mod cli;
pub mod config;
pub mod formats;
pub mod runner;
