//! Problem-file parsing, run orchestration, and deterministic outputs for the
//! temporal-tree damping solver.

pub mod error;
pub mod output;
pub mod problem;
pub mod run;

pub use error::CliError;
pub use problem::{emit_problem, parse_problem, Problem};
pub use run::{run, Mode, RunConfig};
