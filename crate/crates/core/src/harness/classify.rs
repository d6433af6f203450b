//! Omniscient vehicle-level state classification and the transition
//! legality table.
//!
//! Each step is labelled from ground truth and from the mode in effect,
//! which is the set-point applied on the previous step. The first matching
//! rule wins:
//!
//! 1. terminal collision record: `Crash`
//! 2. terminal minimal-risk record: `MinimalRiskCondition`
//! 3. supervisor set-point in effect: `SafetyManeuverSc`
//! 4. nominal set-point with safety-maneuver intent in effect: `SafetyManeuverNc`
//! 5. a takeover or watchdog directive has been issued: `CriticalErrorDetected`
//! 6. true risk at or above `R_max`: `UndetectedHazardousEvent` while a
//!    nominal-channel fault is active, otherwise `HazardousEventOperational`
//! 7. otherwise `NominalOperation`, flagged latent when any fault is active

use serde::{Deserialize, Serialize};

use super::trace::{Outcome, StepRecord, Trace, VehicleLevelState};
use crate::platform::{Intent, Source};

use VehicleLevelState::*;

/// A step the rules could not label consistently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleGap {
    pub step: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub from: VehicleLevelState,
    pub to: VehicleLevelState,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Classification {
    pub labels: Vec<(f64, VehicleLevelState)>,
    pub latent: Vec<bool>,
    pub transitions: Vec<Transition>,
    pub gaps: Vec<RuleGap>,
}

/// Labels every record. Records without a label are reported as gaps and
/// left out of `labels`.
pub fn classify_records(records: &[StepRecord], r_max: f64) -> Classification {
    let mut out = Classification::default();
    let mut detected = false;
    let mut prev: Option<&StepRecord> = None;
    for rec in records {
        detected |= rec.sc.as_ref().is_some_and(|s| s.take_over) || rec.directive.is_some();
        let mode = prev.and_then(|p| p.setpoint);
        match label_step(rec, mode.map(|m| (m.source, m.intent)), detected, r_max) {
            Ok(label) => {
                if let Some((_, last)) = out.labels.last() {
                    if *last != label {
                        out.transitions.push(Transition {
                            t: rec.t,
                            from: *last,
                            to: label,
                        });
                    }
                }
                out.labels.push((rec.t, label));
                out.latent.push(label == NominalOperation && !rec.active_faults.is_empty());
            }
            Err(reason) => out.gaps.push(RuleGap { step: rec.step, reason }),
        }
        prev = Some(rec);
    }
    out
}

fn label_step(rec: &StepRecord, mode: Option<(Source, Intent)>, detected: bool, r_max: f64) -> Result<VehicleLevelState, String> {
    match rec.terminal {
        Some(Outcome::Crash) => return Ok(Crash),
        Some(Outcome::MinimalRiskCondition) => return Ok(MinimalRiskCondition),
        _ => {}
    }
    if rec.true_risk.is_nan() {
        return Err("ground-truth risk is undefined".into());
    }
    match mode {
        Some((Source::Supervisor, _)) if !detected => Err("supervisor in control without a detection event".into()),
        Some((Source::Supervisor, _)) => Ok(SafetyManeuverSc),
        Some((Source::Nominal, Intent::SafetyManeuver)) => Ok(SafetyManeuverNc),
        _ if detected => Ok(CriticalErrorDetected),
        _ if rec.true_risk >= r_max && rec.nc_fault_active => Ok(UndetectedHazardousEvent),
        _ if rec.true_risk >= r_max => Ok(HazardousEventOperational),
        _ => Ok(NominalOperation),
    }
}

/// Classifies a finished trace and stores labels in its records.
pub fn classify_trace(trace: &mut Trace) -> Classification {
    let c = classify_records(&trace.records, trace.header.risk.r_max);
    let mut labels = c.labels.iter().zip(&c.latent);
    let gap_steps: Vec<u64> = c.gaps.iter().map(|g| g.step).collect();
    for rec in &mut trace.records {
        if gap_steps.contains(&rec.step) {
            rec.label = None;
            rec.latent_fault = false;
        } else if let Some(((_, l), latent)) = labels.next() {
            rec.label = Some(*l);
            rec.latent_fault = *latent;
        }
    }
    c
}

/// Whether `to` may directly follow `from`. Self-loops are legal for every
/// non-terminal state.
pub fn is_legal(from: VehicleLevelState, to: VehicleLevelState) -> bool {
    if from == to {
        return !matches!(from, MinimalRiskCondition | Crash);
    }
    match from {
        NominalOperation => matches!(
            to,
            HazardousEventOperational | UndetectedHazardousEvent | CriticalErrorDetected | SafetyManeuverNc
        ),
        HazardousEventOperational => matches!(
            to,
            SafetyManeuverNc | Crash | NominalOperation | CriticalErrorDetected | UndetectedHazardousEvent
        ),
        UndetectedHazardousEvent => matches!(
            to,
            Crash | CriticalErrorDetected | NominalOperation | SafetyManeuverNc | HazardousEventOperational
        ),
        SafetyManeuverNc => matches!(to, MinimalRiskCondition | Crash | CriticalErrorDetected | SafetyManeuverSc),
        CriticalErrorDetected => matches!(to, SafetyManeuverSc | SafetyManeuverNc | Crash),
        SafetyManeuverSc => matches!(to, MinimalRiskCondition | Crash),
        MinimalRiskCondition | Crash => false,
    }
}

/// Every adjacent pair not in the legality table.
pub fn check_transition_legality(labels: &[VehicleLevelState]) -> Vec<(usize, VehicleLevelState, VehicleLevelState)> {
    labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !is_legal(w[0], w[1]))
        .map(|(i, w)| (i + 1, w[0], w[1]))
        .collect()
}
