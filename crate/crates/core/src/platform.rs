//! Shared execution platform: clamps set-points to current capabilities and
//! reports its status to both channels.

use serde::{Deserialize, Serialize};

use crate::fault::{FaultKind, FaultSpec};
use crate::sim::{Actuation, LaneCmd, RoadConfig, A_ACCEL_MAX, A_BRAKE_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Nominal,
    Supervisor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intent {
    Normal,
    SafetyManeuver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub source: Source,
    pub accel_request: f64,
    pub lane_cmd: LaneCmd,
    pub intent: Intent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformStatus {
    pub brake_capability: f64,
    pub lane_change_available: bool,
    pub degraded: bool,
    pub fault_codes: Vec<String>,
}

impl Default for PlatformStatus {
    fn default() -> Self {
        Self {
            brake_capability: A_BRAKE_MAX,
            lane_change_available: true,
            degraded: false,
            fault_codes: Vec::new(),
        }
    }
}

/// Builds the platform status from the platform faults active this step.
/// Platform faults are always reported, in the same step they activate.
pub fn report_status<'a>(active: impl IntoIterator<Item = &'a FaultSpec>) -> PlatformStatus {
    let mut status = PlatformStatus::default();
    for fault in active {
        if let FaultKind::PlatformBrakeDegrade = fault.kind {
            let factor = fault.params.factor.unwrap_or(0.5).clamp(0.01, 1.0);
            status.brake_capability = status.brake_capability.min(A_BRAKE_MAX * factor);
            status.fault_codes.push(fault.code());
        }
    }
    status.degraded = status.brake_capability < A_BRAKE_MAX || !status.lane_change_available;
    status
}

/// Turns the selected set-point into an actuation the vehicle can deliver.
pub fn execute_setpoint(sp: &Setpoint, status: &PlatformStatus, road: &RoadConfig) -> Actuation {
    let accel = sp.accel_request.clamp(-status.brake_capability, A_ACCEL_MAX);
    let shoulder_maneuver = sp.lane_cmd == LaneCmd::ToShoulder
        && sp.source == Source::Supervisor
        && sp.intent == Intent::SafetyManeuver
        && road.has_shoulder;
    let lane_cmd = match sp.lane_cmd {
        LaneCmd::ToShoulder if !shoulder_maneuver => LaneCmd::Keep,
        LaneCmd::ToShoulder => LaneCmd::ToShoulder,
        _ if !status.lane_change_available => LaneCmd::Keep,
        cmd => cmd,
    };
    Actuation { accel, lane_cmd }
}
