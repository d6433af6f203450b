//! Per-step trace records and their newline-delimited JSON form.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::fault::FaultSpec;
use crate::nominal::Behavior;
use crate::platform::{Intent, PlatformStatus, Setpoint};
use crate::risk::RiskParams;
use crate::sim::{CollisionRecord, VehicleState};
use crate::supervisor::{EscAssessment, IscViolation, Maneuver, SupervisorConfig, TakeoverCause};
use crate::switch::NcDirective;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    MissionComplete,
    MinimalRiskCondition,
    Crash,
    ArchitecturalFailure,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Vehicle-level states of the hazardous-event diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleLevelState {
    NominalOperation,
    HazardousEventOperational,
    SafetyManeuverNc,
    CriticalErrorDetected,
    SafetyManeuverSc,
    UndetectedHazardousEvent,
    MinimalRiskCondition,
    Crash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MrcGrade {
    Shoulder,
    RightmostLane,
    OtherLane,
}

/// Nominal channel flows of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcFlows {
    pub heartbeat: u64,
    pub self_diagnosed_errors: Vec<String>,
    pub risk: f64,
    pub behavior: Behavior,
    pub intent: Intent,
    pub planned_accel: f64,
    pub setpoint: Setpoint,
}

/// Supervisor channel flows of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScFlows {
    pub standby_in_charge: bool,
    pub isc: Vec<IscViolation>,
    pub esc: EscAssessment,
    pub take_over: bool,
    pub cause: Option<TakeoverCause>,
    pub maneuver: Maneuver,
    pub plan: Setpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub schema_version: u32,
    pub step: u64,
    pub t: f64,
    pub ego: VehicleState,
    pub actors: Vec<VehicleState>,
    pub active_faults: Vec<String>,
    pub nc_fault_active: bool,
    pub platform: PlatformStatus,
    pub nc: Option<NcFlows>,
    pub sc: Option<ScFlows>,
    pub live_signal: Option<u64>,
    pub directive: Option<NcDirective>,
    /// Set-point forwarded to the platform; absent on the terminal record.
    pub setpoint: Option<Setpoint>,
    pub takeover_latched: bool,
    pub architectural_failure: bool,
    pub true_risk: f64,
    pub terminal: Option<Outcome>,
    pub label: Option<VehicleLevelState>,
    pub latent_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub supervisor: SupervisorConfig,
    pub supervisor_enabled: bool,
    pub risk: RiskParams,
    pub faults: Vec<FaultSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TakeoverRecord {
    pub t: f64,
    pub cause: Option<TakeoverCause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub schema_version: u32,
    pub outcome: Outcome,
    pub t_end: f64,
    pub collision: Option<CollisionRecord>,
    pub mrc_grade: Option<MrcGrade>,
    pub takeover: Option<TakeoverRecord>,
    /// First time the safety supervisor's live signal was judged lost.
    pub directive_t: Option<f64>,
    pub architectural_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<StepRecord>,
    pub end: TraceEnd,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(Box<StepRecord>),
    End(TraceEnd),
}

impl Trace {
    pub fn outcome(&self) -> Outcome {
        self.end.outcome
    }

    pub fn labels(&self) -> Vec<Option<VehicleLevelState>> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Header, one line per step, then the end record.
    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        let mut line = |l: &Line| -> io::Result<()> {
            serde_json::to_writer(&mut out, l)?;
            out.write_all(b"\n")
        };
        line(&Line::Header(self.header.clone()))?;
        for r in &self.records {
            line(&Line::Step(Box::new(r.clone())))?;
        }
        line(&Line::End(self.end.clone()))?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> io::Result<Trace> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut header = None;
        let mut records = Vec::new();
        let mut end = None;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                Line::Header(h) => header = Some(h),
                Line::Step(r) => records.push(*r),
                Line::End(e) => end = Some(e),
            }
        }
        Ok(Trace {
            header: header.ok_or_else(|| bad("missing header record"))?,
            records,
            end: end.ok_or_else(|| bad("missing end record"))?,
        })
    }
}
