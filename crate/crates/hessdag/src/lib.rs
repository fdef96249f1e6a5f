//! File formats, synthetic tasks, training and the experiment harness built
//! on `hessdag-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;
pub mod spec;
pub mod task;
pub mod train;

pub use error::{CliError, Result};
