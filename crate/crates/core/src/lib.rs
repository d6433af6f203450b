//! Simulation of an automated driving intelligence built from a nominal
//! channel and an independent safety supervisor, with fault injection and
//! a campaign harness.

pub mod fault;
pub mod nominal;
pub mod platform;
pub mod risk;
pub mod rng;
pub mod sensor;
pub mod sim;
pub mod supervisor;
pub mod switch;
pub mod harness;

use harness::scenario::FieldError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<FieldError>),
    #[error("i/o: {0}")]
    Io(String),
    #[error("run {run_id} failed ({}): {message}", .fault.as_deref().unwrap_or("no fault"))]
    RunFailed {
        run_id: String,
        fault: Option<String>,
        message: String,
    },
    #[error("internal: {0}")]
    Internal(String),
}
