//! Scenario loading, the per-step scheduler, traces, classification and
//! campaigns.

pub mod campaign;
pub mod classify;
pub mod scenario;
pub mod scheduler;
pub mod trace;

pub use campaign::{compute_metrics, run_campaign, single_fault_campaign, Metrics, RunSpec};
pub use classify::{check_transition_legality, classify_trace};
pub use scenario::ScenarioConfig;
pub use scheduler::{run_scenario, run_scenario_with, RunOptions};
pub use trace::{Outcome, Trace, VehicleLevelState};
