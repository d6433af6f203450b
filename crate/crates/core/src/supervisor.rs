//! The safety supervisor channel: independent sensing, internal and
//! external safety-constraint monitoring, the takeover decision, an
//! always-ready safety maneuver plan and the live signal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fault::{corrupt_observation, FaultKind, FaultSpec};
use crate::nominal::{IntendedTrajectory, NcOutput, NcStatus};
use crate::platform::{Intent, PlatformStatus, Setpoint, Source};
use crate::risk::{estimate_risk, MonitoredState, RiskParams};
use crate::sensor::{sense, SensorConfig};
use crate::sim::{advance_longitudinal, step_time, LaneCmd, RoadConfig, WorldState, A_ACCEL_MAX, DT};

/// Consecutive frozen steps tolerated on a heartbeat or live signal.
pub const K_MISS: u64 = 3;
/// Position tolerance of the trajectory plausibility check (m).
pub const EPS_POS: f64 = 0.5;
/// Speed tolerance of the trajectory plausibility check (m/s).
pub const EPS_V: f64 = 1.0;
/// Time the nominal channel is given to start its own safety maneuver once
/// the supervisor sees the situation outside the external constraints (s).
pub const T_REACT: f64 = 0.5;
/// Relative excess over capability at which a set-point is implausible.
pub const IMPLAUSIBLE_MARGIN: f64 = 0.10;
/// Braking of a controlled stop (m/s²).
pub const CONTROLLED_DECEL: f64 = 3.0;
/// Minimum speed for a pull-over to the shoulder (m/s).
pub const PULL_OVER_MIN_SPEED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SupervisorConfig {
    #[default]
    LiveSignalSimplex,
    DuplicatedSc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IscKind {
    SelfDiagnosedError,
    HeartbeatLost,
    TrajectoryDeviation,
    SetpointImplausible,
    SafetyManeuverIscBreach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IscViolation {
    pub kind: IscKind,
    pub t_detected: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscAssessment {
    pub risk_sc: f64,
    pub outside_esc: bool,
    pub grace_elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TakeoverCause {
    Isc(IscKind),
    EscGraceExpired,
}

impl std::fmt::Display for TakeoverCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TakeoverCause::Isc(k) => write!(f, "{k:?}"),
            TakeoverCause::EscGraceExpired => f.write_str("EscGraceExpired"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TakeoverDecision {
    pub take_over: bool,
    pub cause: Option<TakeoverCause>,
    pub t: f64,
}

impl TakeoverDecision {
    pub fn stay(t: f64) -> Self {
        Self {
            take_over: false,
            cause: None,
            t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Maneuver {
    EmergencyStopInLane,
    ControlledStopInLane,
    PullToShoulder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyManeuverPlan {
    pub maneuver: Maneuver,
    pub setpoint: Setpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveSignal {
    pub counter: u64,
}

/// Watches a monotone counter and reports when it has stayed frozen for
/// [`K_MISS`] steps after the first missed increment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FreezeDetector {
    last: Option<u64>,
    first_missed: Option<u64>,
}

impl FreezeDetector {
    /// Feeds the counter value seen at `step` (`None` when nothing arrived).
    /// Returns true once the counter is considered lost.
    pub fn observe(&mut self, step: u64, value: Option<u64>) -> bool {
        let advanced = match (value, self.last) {
            (Some(v), Some(last)) => v > last,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if advanced {
            self.last = value;
            self.first_missed = None;
            return false;
        }
        let first = *self.first_missed.get_or_insert(step);
        step - first >= K_MISS
    }
}

/// State carried by the internal-constraint monitor between steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IscMonitorState {
    pub heartbeat: FreezeDetector,
    /// Ego motion predicted by chaining the nominal channel's one-step
    /// predictions: `(s, v)` expected at the current step.
    pub shadow: Option<(f64, f64)>,
}

/// Checks the nominal channel's status and outputs against the internal
/// safety constraints. `nc` is `None` when the channel was silent.
pub fn monitor_isc(
    step: u64,
    nc: Option<(&NcStatus, &IntendedTrajectory, &Setpoint)>,
    platform: &PlatformStatus,
    sc_obs: &MonitoredState,
    state: &mut IscMonitorState,
) -> Vec<IscViolation> {
    let t = step_time(step);
    let mut out = Vec::new();
    let violation = |kind, detail: String| IscViolation {
        kind,
        t_detected: t,
        detail,
    };

    if let Some((status, _, _)) = nc {
        if !status.self_diagnosed_errors.is_empty() {
            out.push(violation(
                IscKind::SelfDiagnosedError,
                status.self_diagnosed_errors.join(","),
            ));
        }
    }
    if state.heartbeat.observe(step, nc.map(|(s, _, _)| s.heartbeat)) {
        out.push(violation(IscKind::HeartbeatLost, format!("frozen for {K_MISS} steps")));
    }

    match nc {
        Some((_, traj, _)) => {
            let (s_exp, v_exp) = state.shadow.unwrap_or((sc_obs.ego_s, sc_obs.ego_v));
            let (ds, dv) = ((sc_obs.ego_s - s_exp).abs(), (sc_obs.ego_v - v_exp).abs());
            if ds > EPS_POS || dv > EPS_V {
                out.push(violation(
                    IscKind::TrajectoryDeviation,
                    format!("position error {ds:.3} m, speed error {dv:.3} m/s"),
                ));
            }
            let a_plan = traj.samples.first().map_or(0.0, |s| s.a);
            state.shadow = Some(advance_longitudinal(s_exp, v_exp, a_plan, DT));
        }
        None => state.shadow = None,
    }

    if let Some((_, _, sp)) = nc {
        let a = sp.accel_request;
        let limit_brake = platform.brake_capability * (1.0 + IMPLAUSIBLE_MARGIN);
        let limit_accel = A_ACCEL_MAX * (1.0 + IMPLAUSIBLE_MARGIN);
        if a < -limit_brake || a > limit_accel {
            out.push(violation(IscKind::SetpointImplausible, format!("accel request {a:.2} m/s²")));
        }
    }

    if !out.is_empty() && nc.is_some_and(|(_, traj, _)| traj.intent == Intent::SafetyManeuver) {
        out.push(violation(
            IscKind::SafetyManeuverIscBreach,
            "constraint violated during the nominal safety maneuver".into(),
        ));
    }
    out
}

/// External-constraint check on the supervisor's own view. The grace timer
/// runs while the situation is outside the safe set, unless the nominal
/// channel is already in a safety maneuver that brakes at least as hard as
/// the supervisor's estimate of the required deceleration.
pub fn monitor_esc(sc_obs: &MonitoredState, nc_command: Option<(Intent, f64)>, params: &RiskParams, grace_steps: &mut u32) -> EscAssessment {
    let risk_sc = estimate_risk(sc_obs, params);
    let outside_esc = risk_sc >= params.r_max;
    let required = risk_sc * params.a_avoid_max;
    let handled = nc_command.is_some_and(|(intent, accel)| intent == Intent::SafetyManeuver && -accel >= required - 1e-9);
    if outside_esc && !handled {
        *grace_steps += 1;
    } else {
        *grace_steps = 0;
    }
    EscAssessment {
        risk_sc,
        outside_esc,
        grace_elapsed: f64::from(*grace_steps) * DT,
    }
}

/// Latching takeover rule.
pub fn decide_takeover(isc: &[IscViolation], esc: &EscAssessment, latched: &mut Option<TakeoverDecision>, t: f64) -> TakeoverDecision {
    if let Some(d) = latched {
        return *d;
    }
    let cause = isc
        .first()
        .map(|v| TakeoverCause::Isc(v.kind))
        .or_else(|| (esc.grace_elapsed >= T_REACT - 1e-9).then_some(TakeoverCause::EscGraceExpired));
    match cause {
        Some(cause) => {
            let d = TakeoverDecision {
                take_over: true,
                cause: Some(cause),
                t,
            };
            *latched = Some(d);
            d
        }
        None => TakeoverDecision::stay(t),
    }
}

fn shoulder_clear(sc_obs: &MonitoredState, road: &RoadConfig) -> bool {
    let Some(shoulder) = road.shoulder_lane() else {
        return false;
    };
    let lo = sc_obs.ego_s - 20.0;
    let hi = sc_obs.ego_s + 80.0;
    !sc_obs
        .objects
        .iter()
        .any(|o| (sc_obs.ego_lane + 1..=shoulder).any(|l| o.occupies(l)) && o.s > lo && o.s < hi)
}

/// Degraded-mode maneuver selection, recomputed every step.
pub fn plan_safety_maneuver(
    sc_obs: &MonitoredState,
    esc: &EscAssessment,
    platform: &PlatformStatus,
    road: &RoadConfig,
    params: &RiskParams,
) -> SafetyManeuverPlan {
    let full = platform.brake_capability;
    let imminent = esc.risk_sc >= params.r_max;
    let (maneuver, decel, lane_cmd) = if road.has_shoulder && shoulder_clear(sc_obs, road) && sc_obs.ego_v > PULL_OVER_MIN_SPEED {
        let decel = if imminent { full } else { CONTROLLED_DECEL.min(full) };
        (Maneuver::PullToShoulder, decel, LaneCmd::ToShoulder)
    } else if !imminent {
        (Maneuver::ControlledStopInLane, CONTROLLED_DECEL.min(full), LaneCmd::Keep)
    } else {
        (Maneuver::EmergencyStopInLane, full, LaneCmd::Keep)
    };
    SafetyManeuverPlan {
        maneuver,
        setpoint: Setpoint {
            source: Source::Supervisor,
            accel_request: -decel,
            lane_cmd,
            intent: Intent::SafetyManeuver,
        },
    }
}

pub fn emit_live_signal(counter: &mut u64, healthy: bool) -> Option<LiveSignal> {
    if healthy {
        *counter += 1;
        Some(LiveSignal { counter: *counter })
    } else {
        None
    }
}

/// Everything one supervisor replica produces in a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScOutput {
    pub observation: MonitoredState,
    pub isc: Vec<IscViolation>,
    pub esc: EscAssessment,
    pub decision: TakeoverDecision,
    pub plan: SafetyManeuverPlan,
}

/// One supervisor replica with its own sensing and monitor state.
pub struct SupervisorReplica {
    sensor: SensorConfig,
    rng: ChaCha8Rng,
    isc_state: IscMonitorState,
    grace_steps: u32,
    latched: Option<TakeoverDecision>,
}

impl SupervisorReplica {
    pub fn new(sensor: SensorConfig, rng: ChaCha8Rng) -> Self {
        Self {
            sensor,
            rng,
            isc_state: IscMonitorState::default(),
            grace_steps: 0,
            latched: None,
        }
    }

    /// Sensing unaffected by nominal-channel perception faults; faults aimed
    /// at this replica's perception are applied in `perception_faults`.
    pub fn sense(&mut self, world: &WorldState, perception_faults: &[&FaultSpec]) -> MonitoredState {
        sense_sc(world, perception_faults, &self.sensor, &mut self.rng)
    }

    pub fn step(
        &mut self,
        world: &WorldState,
        perception_faults: &[&FaultSpec],
        nc: Option<&NcOutput>,
        platform: &PlatformStatus,
        params: &RiskParams,
    ) -> ScOutput {
        let observation = self.sense(world, perception_faults);
        let params = params.limited_to(platform.brake_capability);
        let isc = monitor_isc(
            world.step,
            nc.map(|o| (&o.status, &o.trajectory, &o.setpoint)),
            platform,
            &observation,
            &mut self.isc_state,
        );
        let esc = monitor_esc(
            &observation,
            nc.map(|o| (o.setpoint.intent, o.setpoint.accel_request)),
            &params,
            &mut self.grace_steps,
        );
        let decision = decide_takeover(&isc, &esc, &mut self.latched, world.t);
        let plan = plan_safety_maneuver(&observation, &esc, platform, &world.road, &params);
        ScOutput {
            observation,
            isc,
            esc,
            decision,
            plan,
        }
    }
}

pub fn sense_sc(world: &WorldState, active: &[&FaultSpec], cfg: &SensorConfig, rng: &mut impl Rng) -> MonitoredState {
    let mut obs = sense(world, cfg, rng);
    let ego_front = world.ego.s + world.ego.length;
    for fault in active.iter().filter(|f| f.kind == FaultKind::ScFalsePositivePerception) {
        corrupt_observation(&mut obs.objects, fault, ego_front, world.ego.lane, world.t);
    }
    obs
}

/// The supervisor channel: a primary replica and, in the duplicated
/// configuration, a hot standby that takes over monitoring when the
/// primary falls silent.
pub struct SupervisorChannel {
    config: SupervisorConfig,
    primary: SupervisorReplica,
    standby: Option<SupervisorReplica>,
    live_counter: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorStep {
    /// Output of the replica in charge, `None` when no replica is alive.
    pub active: Option<ScOutput>,
    pub standby_in_charge: bool,
    pub live: Option<LiveSignal>,
}

impl SupervisorChannel {
    pub fn new(config: SupervisorConfig, sensor: SensorConfig, primary_rng: ChaCha8Rng, standby_rng: ChaCha8Rng) -> Self {
        let standby = (config == SupervisorConfig::DuplicatedSc).then(|| SupervisorReplica::new(sensor, standby_rng));
        Self {
            config,
            primary: SupervisorReplica::new(sensor, primary_rng),
            standby,
            live_counter: 0,
        }
    }

    pub fn config(&self) -> SupervisorConfig {
        self.config
    }

    pub fn step(
        &mut self,
        world: &WorldState,
        active: &[&FaultSpec],
        nc: Option<&NcOutput>,
        platform: &PlatformStatus,
        params: &RiskParams,
    ) -> SupervisorStep {
        let primary_silent = active.iter().any(|f| f.kind == FaultKind::ScSilence);
        let primary_faults: Vec<&FaultSpec> = active
            .iter()
            .copied()
            .filter(|f| f.kind == FaultKind::ScFalsePositivePerception)
            .collect();
        let primary = (!primary_silent).then(|| self.primary.step(world, &primary_faults, nc, platform, params));
        let standby = self.standby.as_mut().map(|s| s.step(world, &[], nc, platform, params));
        let live = emit_live_signal(&mut self.live_counter, !primary_silent);
        let standby_in_charge = primary.is_none() && standby.is_some();
        SupervisorStep {
            active: primary.or(standby),
            standby_in_charge,
            live,
        }
    }
}
