use crate::fault::{active_faults, FaultKind, FaultSpec};
use crate::nominal::{NcConfig, NcGains, NcOutput, NominalChannel};
use crate::platform::{execute_setpoint, report_status, Intent, PlatformStatus};
use crate::risk::estimate_risk;
use crate::rng::{stream, Stream};
use crate::sensor::{ground_truth, SensorConfig};
use crate::sim::{detect_collision, step_index, step_world, WorldState};
use crate::supervisor::{SupervisorChannel, SupervisorStep};
use crate::switch::{arbitrate, watchdog_sc, ArbitrationState, Watchdog};

use super::classify::classify_trace;
use super::scenario::ScenarioConfig;
use super::trace::{
    MrcGrade, NcFlows, Outcome, ScFlows, StepRecord, TakeoverRecord, Trace, TraceEnd, TraceHeader, SCHEMA_VERSION,
};

/// Time the ego has to stand still under a safety maneuver (s).
pub const MRC_STANDSTILL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Debug switch: run without the safety supervisor channel.
    pub supervisor_enabled: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            supervisor_enabled: true,
        }
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Trace {
    run_scenario_with(cfg, &RunOptions::default())
}

fn mrc_grade(world: &WorldState) -> MrcGrade {
    let ego = &world.ego;
    if ego.lane_change.is_some() {
        MrcGrade::OtherLane
    } else if world.road.is_shoulder(ego.lane) {
        MrcGrade::Shoulder
    } else if ego.lane == world.road.rightmost_lane() {
        MrcGrade::RightmostLane
    } else {
        MrcGrade::OtherLane
    }
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
}

impl Ctx<'_> {
    fn base_record(&self, world: &WorldState, active: &[&FaultSpec], platform: &PlatformStatus) -> StepRecord {
        let params = self.cfg.risk.limited_to(platform.brake_capability);
        StepRecord {
            schema_version: SCHEMA_VERSION,
            step: world.step,
            t: world.t,
            ego: world.ego.clone(),
            actors: world.actors.iter().map(|a| a.state.clone()).collect(),
            active_faults: active.iter().map(|f| f.code()).collect(),
            nc_fault_active: active.iter().any(|f| f.kind.is_nc()),
            platform: platform.clone(),
            nc: None,
            sc: None,
            live_signal: None,
            directive: None,
            setpoint: None,
            takeover_latched: false,
            architectural_failure: false,
            true_risk: estimate_risk(&ground_truth(world), &params),
            terminal: None,
            label: None,
            latent_fault: false,
        }
    }
}

fn nc_flows(o: &NcOutput) -> NcFlows {
    NcFlows {
        heartbeat: o.status.heartbeat,
        self_diagnosed_errors: o.status.self_diagnosed_errors.clone(),
        risk: o.risk,
        behavior: o.behavior,
        intent: o.trajectory.intent,
        planned_accel: o.trajectory.samples.first().map_or(0.0, |s| s.a),
        setpoint: o.setpoint,
    }
}

fn sc_flows(s: &SupervisorStep) -> Option<ScFlows> {
    s.active.as_ref().map(|o| ScFlows {
        standby_in_charge: s.standby_in_charge,
        isc: o.isc.clone(),
        esc: o.esc,
        take_over: o.decision.take_over,
        cause: o.decision.cause,
        maneuver: o.plan.maneuver,
        plan: o.plan.setpoint,
    })
}

/// Runs one scenario to completion: the mission duration, a collision or a
/// minimal risk condition. The returned trace is already classified.
pub fn run_scenario_with(cfg: &ScenarioConfig, opts: &RunOptions) -> Trace {
    let seed = cfg.seed;
    let ctx = Ctx { cfg };
    let mut world = cfg.initial_world();
    let nc_cfg = NcConfig {
        set_speed: cfg.set_speed,
        sensor: SensorConfig::NOMINAL,
        gains: NcGains::default(),
    };
    let mut nc = NominalChannel::new(nc_cfg, stream(seed, Stream::NcSensor), stream(seed, Stream::NcDiagnosis));
    let mut sc = opts.supervisor_enabled.then(|| {
        SupervisorChannel::new(
            cfg.supervisor,
            SensorConfig::SUPERVISOR,
            stream(seed, Stream::ScPrimarySensor),
            stream(seed, Stream::ScStandbySensor),
        )
    });
    let mut fault_rng = stream(seed, Stream::FaultCorruption);
    let mut arb = ArbitrationState::default();
    let mut watchdog = Watchdog::default();
    let end_step = cfg.steps();
    let mrc_steps = step_index(MRC_STANDSTILL);

    let mut records = Vec::new();
    let mut stationary_since: Option<u64> = None;
    let mut takeover: Option<TakeoverRecord> = None;
    let mut directive_t = None;
    let mut arch_failure = false;

    let (outcome, collision) = loop {
        let step = world.step;
        let active = active_faults(&cfg.faults, step);
        let platform = report_status(active.iter().copied().filter(|f| f.kind == FaultKind::PlatformBrakeDegrade));

        if let Some(c) = detect_collision(&world) {
            let mut rec = ctx.base_record(&world, &active, &platform);
            rec.terminal = Some(Outcome::Crash);
            records.push(rec);
            break (Outcome::Crash, Some(c));
        }
        if stationary_since.is_some_and(|s| step - s >= mrc_steps) {
            let mut rec = ctx.base_record(&world, &active, &platform);
            rec.terminal = Some(Outcome::MinimalRiskCondition);
            records.push(rec);
            let outcome = if arch_failure {
                Outcome::ArchitecturalFailure
            } else {
                Outcome::MinimalRiskCondition
            };
            break (outcome, None);
        }
        if step >= end_step {
            let mut rec = ctx.base_record(&world, &active, &platform);
            let outcome = if arch_failure {
                Outcome::ArchitecturalFailure
            } else {
                Outcome::MissionComplete
            };
            rec.terminal = Some(outcome);
            records.push(rec);
            break (outcome, None);
        }

        let nc_faults: Vec<&FaultSpec> = active.iter().copied().filter(|f| f.kind.is_nc()).collect();
        let sc_faults: Vec<&FaultSpec> = active.iter().copied().filter(|f| f.kind.is_sc()).collect();

        let nc_out = nc.step(&world, &nc_faults, &platform, &cfg.risk, &mut fault_rng);
        let sc_step = sc
            .as_mut()
            .map(|s| s.step(&world, &sc_faults, nc_out.as_ref(), &platform, &cfg.risk));
        let directive = match (&sc, &sc_step) {
            (Some(unit), Some(st)) => watchdog_sc(step, st.live, unit.config(), &mut watchdog),
            _ => None,
        };
        if directive.is_some() {
            nc.order_safety_maneuver();
            directive_t.get_or_insert(world.t);
        }
        let sc_active = sc_step.as_ref().and_then(|s| s.active.as_ref());
        let a = arbitrate(
            nc_out.as_ref().map(|o| &o.setpoint),
            sc_active.map(|o| &o.plan),
            sc_active.map(|o| &o.decision),
            &mut arb,
        );
        if let Some(d) = sc_active.map(|o| o.decision).filter(|d| d.take_over) {
            takeover.get_or_insert(TakeoverRecord { t: d.t, cause: d.cause });
        }
        arch_failure |= a.architectural_failure;
        let act = execute_setpoint(&a.setpoint, &platform, &world.road);

        let mut rec = ctx.base_record(&world, &active, &platform);
        rec.nc = nc_out.as_ref().map(nc_flows);
        rec.sc = sc_step.as_ref().and_then(sc_flows);
        rec.live_signal = sc_step.as_ref().and_then(|s| s.live).map(|l| l.counter);
        rec.directive = directive;
        rec.setpoint = Some(a.setpoint);
        rec.takeover_latched = arb.takeover_latched;
        rec.architectural_failure = a.architectural_failure;
        records.push(rec);

        world = step_world(&world, &act);
        if world.ego.v == 0.0 && a.setpoint.intent == Intent::SafetyManeuver {
            stationary_since.get_or_insert(world.step);
        } else {
            stationary_since = None;
        }
    };

    let mut trace = Trace {
        header: TraceHeader {
            schema_version: SCHEMA_VERSION,
            scenario: cfg.name.clone(),
            seed,
            supervisor: cfg.supervisor,
            supervisor_enabled: opts.supervisor_enabled,
            risk: cfg.risk,
            faults: cfg.faults.clone(),
        },
        records,
        end: TraceEnd {
            schema_version: SCHEMA_VERSION,
            outcome,
            t_end: world.t,
            collision,
            mrc_grade: (outcome == Outcome::MinimalRiskCondition).then(|| mrc_grade(&world)),
            takeover,
            directive_t,
            architectural_failure: arch_failure,
        },
    };
    classify_trace(&mut trace);
    trace
}
