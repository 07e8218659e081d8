//! Library side of the command-line front end: configuration loading,
//! verification-suite orchestration, and CSV artifact emission. The binary
//! in `main.rs` is a thin argument parser over [`runner::execute`].

pub mod config;
pub mod csvio;
pub mod runner;
pub mod verify;

pub use config::ExperimentConfig;
pub use runner::{execute, Command, Invocation};
pub use verify::{verify_all, VerifyReport};
