//! Configuration, run orchestration, file formats and the command-line
//! front end for the counting-field hierarchy engine in `fcs-heom-core`.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod engine;
pub mod error;
pub mod output;
pub mod runner;

pub use config::RunConfig;
pub use error::AppError;
