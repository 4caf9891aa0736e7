//! Scenario runner for the brewery demand-response simulator: loads a
//! scenario, simulates every facility and writes the national report.

pub mod error;
pub mod report;
pub mod run;
pub mod scenario;
pub mod synth;

pub use error::AppError;
pub use run::{run_scenario, Inputs, NationalReport};
pub use scenario::{Mode, Scenario};
