//! Experiment harness for the `timewarp` engine.
//!
//! A run matrix is a list of [`RunSpec`]s. Each spec is executed
//! `repetitions` times; wall-clock times are averaged and turned into
//! speedups against the 1-LP row of the same model. In verify mode every run
//! is also checked against the sequential simulator.

pub mod golden;
pub mod plan;
pub mod report;
pub mod run;

pub use plan::{parse_matrix, Mode, RunSpec};
pub use report::{emit_csv, CsvRow};
pub use run::{execute, run_matrix, RunResult};
