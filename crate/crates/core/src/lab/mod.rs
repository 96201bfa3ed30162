//! Configuration-driven experiments with reproducible artifacts.

pub mod config;
pub mod experiments;
pub mod io;
pub mod run;

pub use config::{ExperimentKind, LabConfig};
pub use experiments::Status;
pub use io::Manifest;
pub use run::run;
