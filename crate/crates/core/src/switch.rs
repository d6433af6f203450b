//! Set-point arbitration between the channels and the live-signal watchdog
//! that lets the nominal channel notice a dead supervisor.

use serde::{Deserialize, Serialize};

use crate::platform::{Intent, Setpoint, Source};
use crate::supervisor::{FreezeDetector, LiveSignal, SafetyManeuverPlan, SupervisorConfig, TakeoverDecision};
use crate::sim::LaneCmd;

/// Steps the last nominal set-point is held when the channel goes quiet.
pub const HOLD_STEPS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NcDirective {
    BeginSafetyManeuver,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArbitrationState {
    pub takeover_latched: bool,
    pub last_applied: Option<Setpoint>,
    /// Consecutive steps without a set-point from the channel in charge.
    pub missing_steps: u32,
}

/// Result of one arbitration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arbitration {
    pub setpoint: Setpoint,
    /// No channel supplied a usable set-point this step.
    pub architectural_failure: bool,
}

fn hold_or_coast(state: &mut ArbitrationState) -> Setpoint {
    state.missing_steps += 1;
    match state.last_applied {
        Some(sp) if state.missing_steps <= HOLD_STEPS => sp,
        Some(sp) => Setpoint {
            accel_request: 0.0,
            lane_cmd: LaneCmd::Keep,
            ..sp
        },
        None => Setpoint {
            source: Source::Nominal,
            accel_request: 0.0,
            lane_cmd: LaneCmd::Keep,
            intent: Intent::Normal,
        },
    }
}

/// Picks the set-point forwarded to the platform. After a takeover the
/// supervisor's plan is used for the rest of the run. A channel that goes
/// quiet has its last command held for [`HOLD_STEPS`] steps, after which the
/// vehicle coasts.
pub fn arbitrate(
    nc: Option<&Setpoint>,
    sc_plan: Option<&SafetyManeuverPlan>,
    decision: Option<&TakeoverDecision>,
    state: &mut ArbitrationState,
) -> Arbitration {
    if decision.is_some_and(|d| d.take_over) {
        state.takeover_latched = true;
    }
    let chosen = if state.takeover_latched {
        sc_plan.map(|p| p.setpoint)
    } else {
        nc.copied()
    };
    let arb = match chosen {
        Some(sp) => {
            state.missing_steps = 0;
            Arbitration {
                setpoint: sp,
                architectural_failure: false,
            }
        }
        None => {
            let setpoint = hold_or_coast(state);
            Arbitration {
                setpoint,
                architectural_failure: state.takeover_latched || sc_plan.is_none(),
            }
        }
    };
    state.last_applied = Some(arb.setpoint);
    arb
}

/// Nominal-channel side watchdog on the supervisor's live signal. Only the
/// single-supervisor configuration relies on it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Watchdog {
    detector: FreezeDetector,
    fired: bool,
}

impl Watchdog {
    pub fn fired(&self) -> bool {
        self.fired
    }
}

pub fn watchdog_sc(step: u64, live: Option<LiveSignal>, config: SupervisorConfig, wd: &mut Watchdog) -> Option<NcDirective> {
    if config != SupervisorConfig::LiveSignalSimplex || wd.fired {
        return None;
    }
    if wd.detector.observe(step, live.map(|l| l.counter)) {
        wd.fired = true;
        Some(NcDirective::BeginSafetyManeuver)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supervisor::Maneuver;

    fn nc(a: f64) -> Setpoint {
        Setpoint {
            source: Source::Nominal,
            accel_request: a,
            lane_cmd: LaneCmd::Keep,
            intent: Intent::Normal,
        }
    }

    fn plan() -> SafetyManeuverPlan {
        SafetyManeuverPlan {
            maneuver: Maneuver::ControlledStopInLane,
            setpoint: Setpoint {
                source: Source::Supervisor,
                accel_request: -3.0,
                lane_cmd: LaneCmd::Keep,
                intent: Intent::SafetyManeuver,
            },
        }
    }

    fn takeover() -> TakeoverDecision {
        TakeoverDecision {
            take_over: true,
            cause: None,
            t: 0.0,
        }
    }

    #[test]
    fn nominal_passes_through() {
        let mut st = ArbitrationState::default();
        let a = arbitrate(Some(&nc(1.0)), Some(&plan()), None, &mut st);
        assert_eq!(a.setpoint, nc(1.0));
        assert!(!a.architectural_failure);
    }

    #[test]
    fn takeover_latches() {
        let mut st = ArbitrationState::default();
        let a = arbitrate(Some(&nc(1.0)), Some(&plan()), Some(&takeover()), &mut st);
        assert_eq!(a.setpoint.source, Source::Supervisor);
        let b = arbitrate(Some(&nc(1.0)), Some(&plan()), None, &mut st);
        assert_eq!(b.setpoint.source, Source::Supervisor);
        let c = arbitrate(Some(&nc(1.0)), None, None, &mut st);
        assert!(c.architectural_failure);
        assert_eq!(c.setpoint, plan().setpoint);
    }

    #[test]
    fn hold_then_coast() {
        let mut st = ArbitrationState::default();
        arbitrate(Some(&nc(-2.0)), Some(&plan()), None, &mut st);
        for _ in 0..HOLD_STEPS {
            assert_eq!(arbitrate(None, Some(&plan()), None, &mut st).setpoint.accel_request, -2.0);
        }
        assert_eq!(arbitrate(None, Some(&plan()), None, &mut st).setpoint.accel_request, 0.0);
    }

    #[test]
    fn both_missing_is_architectural_failure() {
        let mut st = ArbitrationState::default();
        assert!(arbitrate(None, None, None, &mut st).architectural_failure);
    }

    #[test]
    fn watchdog_fires_once_in_simplex_only() {
        let mut wd = Watchdog::default();
        let mut directives = vec![];
        for step in 0..20u64 {
            let live = (step < 10).then_some(LiveSignal { counter: step + 1 });
            if let Some(d) = watchdog_sc(step, live, SupervisorConfig::LiveSignalSimplex, &mut wd) {
                directives.push((step, d));
            }
        }
        assert_eq!(directives, vec![(13, NcDirective::BeginSafetyManeuver)]);

        let mut wd = Watchdog::default();
        for step in 0..20u64 {
            assert!(watchdog_sc(step, None, SupervisorConfig::DuplicatedSc, &mut wd).is_none());
        }
    }
}
