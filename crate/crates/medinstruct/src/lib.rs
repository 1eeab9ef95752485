//! File formats, synthetic fixtures, the evaluation runner and the command
//! line for `medinstruct-core`.

pub mod cli;
pub mod error;
pub mod io;
pub mod runner;
pub mod synth;

pub use error::{Error, ExitStatus};
