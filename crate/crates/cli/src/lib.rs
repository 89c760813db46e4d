//! File formats, configuration and run-directory stages for the
//! `abusegraph` command-line tool.

pub mod config;
pub mod formats;
pub mod stages;

pub use config::Config;
pub use stages::Run;
