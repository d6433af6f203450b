//! The nominal channel: sensing, situation analysis, behaviour decision,
//! trajectory planning and self-diagnosis, plus heartbeat emission.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fault::{corrupt_observation, corrupt_setpoint, FaultKind, FaultSpec};
use crate::platform::{Intent, PlatformStatus, Setpoint, Source};
use crate::risk::{estimate_risk, MonitoredState, ObservedObject, RiskParams};
use crate::sensor::{sense, SensorConfig};
use crate::sim::{advance_longitudinal, LaneCmd, WorldState, A_ACCEL_MAX, DT};

/// Tracks unobserved for longer than this are dropped (s).
pub const TRACK_DROP_TIME: f64 = 1.0;
const TRACK_DROP_STEPS: u32 = 10;
/// Association gate for detections without an id (m).
pub const GATING_DISTANCE: f64 = 3.0;
/// Planning horizon of the intended trajectory (s).
pub const PLAN_HORIZON: f64 = 2.0;
const PLAN_STEPS: usize = 20;
/// Set speed reduction while the platform reports degradation.
pub const DEGRADED_SPEED_FACTOR: f64 = 0.7;
/// Lead gap-time below which a lane change is considered (s).
pub const LANE_CHANGE_GAP_TIME: f64 = 2.0;
/// Comfortable deceleration opening a safety maneuver (m/s²).
pub const COMFORT_DECEL: f64 = 3.0;

/// Longitudinal control gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NcGains {
    /// Speed-tracking gain (1/s).
    pub k_v: f64,
    /// Gap-error gain (1/s²).
    pub k_g: f64,
    /// Desired time headway (s).
    pub headway: f64,
    /// Standstill gap (m).
    pub standstill_gap: f64,
    /// Maximum acceleration of the car-following term (m/s²).
    pub idm_accel: f64,
    /// Comfortable deceleration of the car-following term (m/s²).
    pub idm_decel: f64,
}

impl Default for NcGains {
    fn default() -> Self {
        Self {
            k_v: 0.5,
            k_g: 0.2,
            headway: 2.0,
            standstill_gap: 5.0,
            idm_accel: 1.5,
            idm_decel: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensorHealth {
    Ok,
    Degraded,
    Failed,
}

/// Flow I: sensor status and diagnostic state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcStatus {
    pub heartbeat: u64,
    pub self_diagnosed_errors: Vec<String>,
    pub sensor_status: Vec<(String, SensorHealth)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub s: f64,
    pub v: f64,
    pub lane: usize,
    pub target_lane: Option<usize>,
    pub length: f64,
    /// Steps since last observation.
    pub age: u32,
}

impl Track {
    fn predicted_s(&self) -> f64 {
        self.s + self.v * f64::from(self.age) * DT
    }

    fn as_object(&self, t: f64) -> ObservedObject {
        ObservedObject {
            id: Some(self.id.clone()),
            s: self.predicted_s(),
            v: self.v,
            lane: self.lane,
            target_lane: self.target_lane,
            length: self.length,
            observed_t: t - f64::from(self.age) * DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldModelNc {
    pub tracks: Vec<Track>,
    next_anon: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

/// Flow III: near-term trajectory and intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntendedTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub intent: Intent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Behavior {
    KeepLane,
    ChangeLaneLeft,
    ChangeLaneRight,
    SafetyManeuver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadInfo {
    pub gap: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationAssessment {
    /// Tracked objects predicted to the current time, in the ego frame.
    pub belief: MonitoredState,
    pub risk: f64,
    /// Risk as if the ego were in each travel lane.
    pub lane_risk: Vec<f64>,
    /// Nearest in-lane object ahead.
    pub lead: Option<LeadInfo>,
    /// Travel lanes with no object alongside the ego.
    pub lane_free: Vec<bool>,
    pub params: RiskParams,
    pub lane_count: usize,
}

/// Detections within range plus perception faults, applied after noise.
pub fn sense_nc(
    world: &WorldState,
    active: &[&FaultSpec],
    cfg: &SensorConfig,
    rng: &mut impl Rng,
) -> (MonitoredState, Vec<(String, SensorHealth)>) {
    let mut obs = sense(world, cfg, rng);
    let ego_front = world.ego.s + world.ego.length;
    for fault in active.iter().filter(|f| f.kind.is_nc_perception()) {
        corrupt_observation(&mut obs.objects, fault, ego_front, world.ego.lane, world.t);
    }
    (obs, vec![("nc.perception".to_string(), SensorHealth::Ok)])
}

fn lead_in(belief: &MonitoredState, objects: impl Iterator<Item = ObservedObject>) -> Option<LeadInfo> {
    objects
        .filter(|o| o.s >= belief.ego_s)
        .map(|o| LeadInfo {
            gap: o.s - belief.ego_s - belief.ego_length,
            v: o.v,
        })
        .min_by(|a, b| a.gap.total_cmp(&b.gap))
}

/// Updates tracks from the latest observation and assesses the situation.
pub fn analyze_nc(obs: &MonitoredState, wm: &mut WorldModelNc, params: &RiskParams, lane_count: usize) -> SituationAssessment {
    for track in &mut wm.tracks {
        track.age += 1;
    }
    for det in &obs.objects {
        let idx = match &det.id {
            Some(id) => wm.tracks.iter().position(|t| &t.id == id),
            None => wm
                .tracks
                .iter()
                .enumerate()
                .filter(|(_, t)| t.id.starts_with('#') && t.lane == det.lane)
                .map(|(i, t)| (i, (t.predicted_s() - det.s).abs()))
                .filter(|(_, d)| *d <= GATING_DISTANCE)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i),
        };
        let updated = |id: String| Track {
            id,
            s: det.s,
            v: det.v,
            lane: det.lane,
            target_lane: det.target_lane,
            length: det.length,
            age: 0,
        };
        match idx {
            Some(i) => wm.tracks[i] = updated(wm.tracks[i].id.clone()),
            None => {
                let id = det.id.clone().unwrap_or_else(|| {
                    wm.next_anon += 1;
                    format!("#{}", wm.next_anon)
                });
                wm.tracks.push(updated(id));
            }
        }
    }
    wm.tracks.retain(|t| t.age <= TRACK_DROP_STEPS);

    let belief = MonitoredState {
        objects: wm.tracks.iter().map(|t| t.as_object(obs.t)).collect(),
        ..obs.clone()
    };
    let risk = estimate_risk(&belief, params);
    let lane_risk = (0..lane_count)
        .map(|l| estimate_risk(&belief.as_if_in_lane(l), params))
        .collect();
    let lead = lead_in(&belief, belief.objects.iter().filter(|o| belief.in_ego_lane(o)).cloned());
    let lane_free = (0..lane_count)
        .map(|l| {
            !belief
                .objects
                .iter()
                .any(|o| o.occupies(l) && o.s > belief.ego_s - 30.0 && o.s < belief.ego_s + belief.ego_length + 10.0)
        })
        .collect();
    SituationAssessment {
        belief,
        risk,
        lane_risk,
        lead,
        lane_free,
        params: *params,
        lane_count,
    }
}

/// Behaviour selection. The caller keeps `SafetyManeuver` latched.
pub fn decide_behavior(assess: &SituationAssessment, platform: &PlatformStatus) -> Behavior {
    let r_max = assess.params.r_max;
    if assess.risk >= r_max {
        return Behavior::SafetyManeuver;
    }
    let b = &assess.belief;
    let tight = assess
        .lead
        .is_some_and(|lead| b.ego_v > 0.0 && lead.gap / b.ego_v < LANE_CHANGE_GAP_TIME);
    if tight && platform.lane_change_available && b.ego_target_lane.is_none() {
        let usable = |l: usize| assess.lane_free[l] && assess.lane_risk[l] < 0.5 * r_max;
        if b.ego_lane > 0 && b.ego_lane <= assess.lane_count && usable(b.ego_lane - 1) {
            return Behavior::ChangeLaneLeft;
        }
        if b.ego_lane + 1 < assess.lane_count && usable(b.ego_lane + 1) {
            return Behavior::ChangeLaneRight;
        }
    }
    Behavior::KeepLane
}

/// Car-following acceleration: the gap-keeping law limited by an
/// intelligent-driver interaction term so that standing obstacles are
/// approached smoothly and held at the standstill gap.
fn following_accel(v: f64, v_set: f64, lead: Option<LeadInfo>, gains: &NcGains) -> f64 {
    let free = gains.k_v * (v_set - v);
    let Some(lead) = lead else {
        return free;
    };
    let g_desired = gains.standstill_gap + gains.headway * v;
    let gap_law = free - gains.k_g * (g_desired - lead.gap).max(0.0);
    let dv = v - lead.v;
    let s_star = gains.standstill_gap
        + (v * gains.headway + v * dv / (2.0 * (gains.idm_accel * gains.idm_decel).sqrt())).max(0.0);
    let ratio = if v_set > 0.0 { v / v_set } else { 1.0 };
    let gap = lead.gap.max(0.1);
    let idm = gains.idm_accel * (1.0 - ratio.powi(4) - (s_star / gap).powi(2));
    gap_law.min(idm)
}

/// Per-step state of the nominal planner.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlannerState {
    pub maneuver_steps: u32,
}

pub struct PlanContext<'a> {
    pub set_speed: f64,
    pub gains: &'a NcGains,
    /// Brake capability the planner assumes (normally the reported one).
    pub assumed_brake: f64,
}

pub fn plan_trajectory(
    behavior: Behavior,
    assess: &SituationAssessment,
    platform: &PlatformStatus,
    ctx: &PlanContext<'_>,
    state: &mut PlannerState,
) -> (IntendedTrajectory, Setpoint) {
    let b = &assess.belief;
    let v_set = if platform.degraded {
        ctx.set_speed * DEGRADED_SPEED_FACTOR
    } else {
        ctx.set_speed
    };
    let brake = ctx.assumed_brake;
    let (intent, lane_cmd) = match behavior {
        Behavior::KeepLane => (Intent::Normal, LaneCmd::Keep),
        Behavior::ChangeLaneLeft => (Intent::Normal, LaneCmd::ChangeLeft),
        Behavior::ChangeLaneRight => (Intent::Normal, LaneCmd::ChangeRight),
        Behavior::SafetyManeuver => (Intent::SafetyManeuver, LaneCmd::Keep),
    };

    let maneuver_decel = if behavior == Behavior::SafetyManeuver {
        let escalate = state.maneuver_steps > 0 && assess.risk >= assess.params.r_max;
        state.maneuver_steps += 1;
        Some(if escalate { brake } else { COMFORT_DECEL.min(brake) })
    } else {
        None
    };

    let law = |v: f64, lead: Option<LeadInfo>| -> f64 {
        match maneuver_decel {
            Some(d) => -d,
            None => following_accel(v, v_set, lead, ctx.gains).clamp(-brake, A_ACCEL_MAX),
        }
    };

    let mut samples = Vec::with_capacity(PLAN_STEPS + 1);
    let (mut s, mut v) = (b.ego_s, b.ego_v);
    let mut lead = assess.lead;
    for k in 0..=PLAN_STEPS {
        let a = law(v, lead);
        samples.push(TrajectorySample {
            t: b.t + k as f64 * DT,
            s,
            v,
            a,
        });
        let (s_next, v_next) = advance_longitudinal(s, v, a, DT);
        if let Some(l) = lead.as_mut() {
            l.gap += l.v * DT - (s_next - s);
        }
        s = s_next;
        v = v_next;
    }
    let setpoint = Setpoint {
        source: Source::Nominal,
        accel_request: samples[0].a,
        lane_cmd,
        intent,
    };
    (IntendedTrajectory { samples, intent }, setpoint)
}

/// Self-reports each active, self-detectable nominal fault with its
/// per-step detectability.
pub fn self_diagnose(active: &[&FaultSpec], rng: &mut impl Rng) -> Vec<String> {
    active
        .iter()
        .filter(|f| f.kind.self_detectable())
        .filter(|f| rng.gen_bool(f.detectability().clamp(0.0, 1.0)))
        .map(|f| f.code())
        .collect()
}

/// Everything the nominal channel emits in one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcOutput {
    pub status: NcStatus,
    pub objects: Vec<ObservedObject>,
    pub trajectory: IntendedTrajectory,
    pub setpoint: Setpoint,
    pub behavior: Behavior,
    pub risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NcConfig {
    pub set_speed: f64,
    pub sensor: SensorConfig,
    pub gains: NcGains,
}

/// The nominal channel with its private world model.
pub struct NominalChannel {
    cfg: NcConfig,
    wm: WorldModelNc,
    planner: PlannerState,
    heartbeat: u64,
    maneuver_latched: bool,
    directive_pending: bool,
    last_emitted: Option<Setpoint>,
    frozen: Option<Setpoint>,
    sensor_rng: ChaCha8Rng,
    diag_rng: ChaCha8Rng,
}

impl NominalChannel {
    pub fn new(cfg: NcConfig, sensor_rng: ChaCha8Rng, diag_rng: ChaCha8Rng) -> Self {
        Self {
            cfg,
            wm: WorldModelNc::default(),
            planner: PlannerState::default(),
            heartbeat: 0,
            maneuver_latched: false,
            directive_pending: false,
            last_emitted: None,
            frozen: None,
            sensor_rng,
            diag_rng,
        }
    }

    /// Order from the live-signal watchdog: begin the safety maneuver on the
    /// next executed step.
    pub fn order_safety_maneuver(&mut self) {
        self.directive_pending = true;
    }

    pub fn world_model(&self) -> &WorldModelNc {
        &self.wm
    }

    /// Executes one step, or returns `None` when the channel is silenced.
    pub fn step(
        &mut self,
        world: &WorldState,
        active: &[&FaultSpec],
        platform: &PlatformStatus,
        params: &RiskParams,
        fault_rng: &mut impl Rng,
    ) -> Option<NcOutput> {
        if active.iter().any(|f| f.kind == FaultKind::NcSilence) {
            return None;
        }
        let (obs, sensor_status) = sense_nc(world, active, &self.cfg.sensor, &mut self.sensor_rng);

        let assumed_brake = active
            .iter()
            .find(|f| f.kind == FaultKind::NcSystematicParam)
            .and_then(|f| f.params.assumed_brake)
            .unwrap_or(platform.brake_capability);
        // a wrong planner parameter also skews the channel's own risk estimate
        let nc_params = if assumed_brake > platform.brake_capability {
            RiskParams { a_avoid_max: assumed_brake, ..*params }
        } else {
            params.limited_to(platform.brake_capability)
        };
        let assess = analyze_nc(&obs, &mut self.wm, &nc_params, world.road.lane_count);

        if self.directive_pending {
            self.maneuver_latched = true;
        }
        let behavior = if self.maneuver_latched {
            Behavior::SafetyManeuver
        } else {
            decide_behavior(&assess, platform)
        };
        if behavior == Behavior::SafetyManeuver {
            self.maneuver_latched = true;
        }
        let ctx = PlanContext {
            set_speed: self.cfg.set_speed,
            gains: &self.cfg.gains,
            assumed_brake,
        };
        let (trajectory, mut setpoint) = plan_trajectory(behavior, &assess, platform, &ctx, &mut self.planner);

        self.heartbeat += 1;
        let errors = self_diagnose(active, &mut self.diag_rng);

        let stuck = active.iter().find(|f| f.kind == FaultKind::NcStuckOutput);
        if stuck.is_some() && self.frozen.is_none() {
            self.frozen = Some(self.last_emitted.unwrap_or(setpoint));
        }
        if stuck.is_none() {
            self.frozen = None;
        }
        for fault in active
            .iter()
            .filter(|f| matches!(f.kind, FaultKind::NcStuckOutput | FaultKind::NcRandomCorruption))
        {
            setpoint = corrupt_setpoint(setpoint, fault, self.frozen, fault_rng);
        }
        if stuck.is_none() {
            self.last_emitted = Some(setpoint);
        }

        let sensor_status = if errors.iter().any(|e| e.contains("nc.perception")) {
            sensor_status
                .into_iter()
                .map(|(n, _)| (n, SensorHealth::Degraded))
                .collect()
        } else {
            sensor_status
        };
        Some(NcOutput {
            status: NcStatus {
                heartbeat: self.heartbeat,
                self_diagnosed_errors: errors,
                sensor_status,
            },
            objects: obs.objects,
            trajectory,
            setpoint,
            behavior,
            risk: assess.risk,
        })
    }
}
