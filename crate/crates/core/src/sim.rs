//! Discrete-time world kernel: straight multi-lane road, longitudinal
//! kinematics with timed lane changes, open-loop actor scripts and
//! collision detection.

use serde::{Deserialize, Serialize};

/// Fixed scheduler period in seconds.
pub const DT: f64 = 0.1;
/// Duration of a lane change in seconds.
pub const LANE_CHANGE_TIME: f64 = 3.0;
/// Lane change duration expressed in scheduler steps.
pub const LANE_CHANGE_STEPS: u32 = 30;
/// Physical braking ceiling (m/s², magnitude).
pub const A_BRAKE_MAX: f64 = 8.0;
/// Physical acceleration ceiling (m/s²).
pub const A_ACCEL_MAX: f64 = 3.0;
/// Speed ceiling (m/s).
pub const V_MAX: f64 = 40.0;
/// Proportional speed-tracking gain used by scripted `Cruise` phases (1/s).
pub const CRUISE_GAIN: f64 = 0.5;

/// Time of scheduler step `step`. Computed from the index so that time
/// never accumulates rounding drift.
pub fn step_time(step: u64) -> f64 {
    step as f64 / 10.0
}

/// Index of the first step whose time is `>= t`.
pub fn step_index(t: f64) -> u64 {
    (t / DT - 1e-9).ceil().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadConfig {
    pub lane_count: usize,
    pub has_shoulder: bool,
    pub segment_length: f64,
}

impl RoadConfig {
    /// Lane index of the shoulder, if the road has one.
    pub fn shoulder_lane(&self) -> Option<usize> {
        self.has_shoulder.then_some(self.lane_count)
    }

    /// Index of the rightmost regular travel lane.
    pub fn rightmost_lane(&self) -> usize {
        self.lane_count - 1
    }

    pub fn is_shoulder(&self, lane: usize) -> bool {
        self.has_shoulder && lane == self.lane_count
    }
}

/// An in-progress lane change. Progress is tracked in whole steps so that
/// completion happens on an exact step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub target_lane: usize,
    pub steps_done: u32,
}

impl LaneChange {
    pub fn progress(&self) -> f64 {
        f64::from(self.steps_done) / f64::from(LANE_CHANGE_STEPS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: String,
    /// Rear bumper position along the segment (m).
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub lane: usize,
    pub lane_change: Option<LaneChange>,
    pub length: f64,
}

impl VehicleState {
    pub fn new(id: impl Into<String>, s: f64, v: f64, lane: usize, length: f64) -> Self {
        Self {
            id: id.into(),
            s,
            v,
            a: 0.0,
            lane,
            lane_change: None,
            length,
        }
    }

    /// Lanes this vehicle occupies for collision purposes: its own lane and,
    /// during a lane change, the target lane as well.
    pub fn occupied_lanes(&self) -> (usize, Option<usize>) {
        (self.lane, self.lane_change.map(|lc| lc.target_lane))
    }

    pub fn occupies(&self, lane: usize) -> bool {
        let (own, target) = self.occupied_lanes();
        own == lane || target == Some(lane)
    }

    pub fn shares_lane_with(&self, other: &VehicleState) -> bool {
        let (own, target) = other.occupied_lanes();
        self.occupies(own) || target.is_some_and(|t| self.occupies(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LaneCmd {
    Keep,
    ChangeLeft,
    ChangeRight,
    ToShoulder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuation {
    pub accel: f64,
    pub lane_cmd: LaneCmd,
}

impl Actuation {
    pub fn keep(accel: f64) -> Self {
        Self {
            accel,
            lane_cmd: LaneCmd::Keep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ActorBehavior {
    Cruise { v_target: f64 },
    Brake { a_brake: f64 },
    CutIn { target_lane: usize },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptPhase {
    pub start_t: f64,
    pub behavior: ActorBehavior,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorScript {
    pub phases: Vec<ScriptPhase>,
}

impl ActorScript {
    pub fn new(phases: Vec<ScriptPhase>) -> Self {
        Self { phases }
    }

    /// Phase active at scheduler step `step`, i.e. the last phase whose
    /// start step is not after `step`.
    pub fn active_phase(&self, step: u64) -> Option<&ScriptPhase> {
        self.phases
            .iter()
            .take_while(|p| step_index(p.start_t) <= step)
            .last()
    }

    /// Earliest time covered by the script, if any.
    pub fn coverage_start(&self) -> Option<f64> {
        self.phases.first().map(|p| p.start_t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub state: VehicleState,
    pub script: ActorScript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub step: u64,
    pub t: f64,
    pub ego: VehicleState,
    pub actors: Vec<Actor>,
    pub road: RoadConfig,
}

impl WorldState {
    pub fn new(ego: VehicleState, actors: Vec<Actor>, road: RoadConfig) -> Self {
        Self {
            step: 0,
            t: 0.0,
            ego,
            actors,
            road,
        }
    }

    pub fn actor(&self, id: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.state.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionRecord {
    pub t: f64,
    /// Ids of the two vehicles, rear vehicle first.
    pub rear: String,
    pub front: String,
    pub gap: f64,
}

/// Advances longitudinal state `(s, v)` by `dt` under constant `accel`,
/// honouring the no-reverse rule and the speed ceiling. When the vehicle
/// would cross zero speed (or the ceiling) within the step, it moves only up
/// to that instant and then holds.
pub fn advance_longitudinal(s: f64, v: f64, accel: f64, dt: f64) -> (f64, f64) {
    let v_next = v + accel * dt;
    if v_next < 0.0 {
        // stops within the step
        let dist = if accel < 0.0 { v * v / (-2.0 * accel) } else { 0.0 };
        (s + dist, 0.0)
    } else if v_next > V_MAX && accel > 0.0 {
        let t_cap = ((V_MAX - v) / accel).max(0.0);
        let dist = v * t_cap + 0.5 * accel * t_cap * t_cap + V_MAX * (dt - t_cap);
        (s + dist, V_MAX)
    } else {
        (s + v * dt + 0.5 * accel * dt * dt, v_next)
    }
}

fn lane_target(lane: usize, cmd: LaneCmd, road: &RoadConfig) -> Option<usize> {
    match cmd {
        LaneCmd::Keep => None,
        LaneCmd::ChangeLeft => lane.checked_sub(1),
        LaneCmd::ChangeRight => (lane + 1 < road.lane_count).then_some(lane + 1),
        LaneCmd::ToShoulder => {
            let limit = road.shoulder_lane()?;
            (lane < limit).then_some(lane + 1)
        }
    }
}

/// One kinematic step of a vehicle. `act` must already be clamped to the
/// platform's capabilities.
pub fn step_vehicle(state: &VehicleState, act: &Actuation, road: &RoadConfig, dt: f64) -> VehicleState {
    let (s, v) = advance_longitudinal(state.s, state.v, act.accel, dt);
    let mut next = VehicleState {
        s,
        v,
        a: act.accel,
        ..state.clone()
    };
    match state.lane_change {
        Some(lc) => {
            let steps_done = lc.steps_done + 1;
            if steps_done >= LANE_CHANGE_STEPS {
                next.lane = lc.target_lane;
                next.lane_change = None;
            } else {
                next.lane_change = Some(LaneChange { steps_done, ..lc });
            }
        }
        None => {
            if let Some(target) = lane_target(state.lane, act.lane_cmd, road) {
                next.lane_change = Some(LaneChange {
                    target_lane: target,
                    steps_done: 0,
                });
            }
        }
    }
    next
}

/// Actuation requested by an actor's script at `step`.
pub fn actor_behavior(script: &ActorScript, step: u64, state: &VehicleState) -> Actuation {
    let Some(phase) = script.active_phase(step) else {
        return Actuation::keep(0.0);
    };
    let clamp = |a: f64| a.clamp(-A_BRAKE_MAX, A_ACCEL_MAX);
    match phase.behavior {
        ActorBehavior::Cruise { v_target } => Actuation::keep(clamp(CRUISE_GAIN * (v_target - state.v))),
        ActorBehavior::Brake { a_brake } => {
            if state.v > 0.0 {
                Actuation::keep(clamp(a_brake))
            } else {
                Actuation::keep(0.0)
            }
        }
        ActorBehavior::Stop => {
            if state.v > 0.0 {
                Actuation::keep(-A_BRAKE_MAX)
            } else {
                Actuation::keep(0.0)
            }
        }
        ActorBehavior::CutIn { target_lane } => {
            let lane_cmd = match target_lane.cmp(&state.lane) {
                std::cmp::Ordering::Less => LaneCmd::ChangeLeft,
                std::cmp::Ordering::Greater => LaneCmd::ChangeRight,
                std::cmp::Ordering::Equal => LaneCmd::Keep,
            };
            Actuation { accel: 0.0, lane_cmd }
        }
    }
}

/// Advances every vehicle by one step. The ego actuation comes from the
/// platform; actors follow their scripts and never react to anyone.
pub fn step_world(world: &WorldState, ego_act: &Actuation) -> WorldState {
    let road = world.road;
    let ego = step_vehicle(&world.ego, ego_act, &road, DT);
    let actors = world
        .actors
        .iter()
        .map(|actor| {
            let act = actor_behavior(&actor.script, world.step, &actor.state);
            Actor {
                state: step_vehicle(&actor.state, &act, &road, DT),
                script: actor.script.clone(),
            }
        })
        .collect();
    let step = world.step + 1;
    WorldState {
        step,
        t: step_time(step),
        ego,
        actors,
        road,
    }
}

fn pair_collision(a: &VehicleState, b: &VehicleState, t: f64) -> Option<CollisionRecord> {
    if !a.shares_lane_with(b) {
        return None;
    }
    let (rear, front) = if a.s <= b.s { (a, b) } else { (b, a) };
    let gap = front.s - rear.s - rear.length;
    (gap <= 0.0).then(|| CollisionRecord {
        t,
        rear: rear.id.clone(),
        front: front.id.clone(),
        gap,
    })
}

/// Reports a collision if any two vehicles share an occupied lane and
/// overlap longitudinally. Ego collisions are reported first; actor pairs
/// are scanned in id order so the result does not depend on list order.
pub fn detect_collision(world: &WorldState) -> Option<CollisionRecord> {
    let mut actors: Vec<&VehicleState> = world.actors.iter().map(|a| &a.state).collect();
    actors.sort_by(|x, y| x.id.cmp(&y.id));
    if let Some(rec) = actors.iter().find_map(|a| pair_collision(&world.ego, a, world.t)) {
        return Some(rec);
    }
    for (i, a) in actors.iter().enumerate() {
        for b in &actors[i + 1..] {
            if let Some(rec) = pair_collision(a, b, world.t) {
                return Some(rec);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn road(lanes: usize) -> RoadConfig {
        RoadConfig {
            lane_count: lanes,
            has_shoulder: true,
            segment_length: 2000.0,
        }
    }

    #[test]
    fn zero_accel_step() {
        let v = VehicleState::new("ego", 0.0, 10.0, 0, 5.0);
        let next = step_vehicle(&v, &Actuation::keep(0.0), &road(1), DT);
        assert!((next.s - 1.0).abs() < 1e-12);
        assert_eq!(next.v, 10.0);
    }

    #[test]
    fn braking_to_standstill_matches_closed_form() {
        let mut v = VehicleState::new("ego", 0.0, 10.0, 0, 5.0);
        let mut steps = 0;
        while v.v > 0.0 {
            v = step_vehicle(&v, &Actuation::keep(-8.0), &road(1), DT);
            steps += 1;
        }
        assert_eq!(steps, 13);
        // v²/2a = 6.25 m
        assert!(v.s >= 6.25 - 1e-9 && v.s <= 6.25 + 10.0 * DT, "s = {}", v.s);
    }

    #[test]
    fn no_reverse() {
        let v = VehicleState::new("ego", 3.0, 0.0, 0, 5.0);
        let next = step_vehicle(&v, &Actuation::keep(-3.0), &road(1), DT);
        assert_eq!(next.v, 0.0);
        assert_eq!(next.s, 3.0);
    }

    #[test]
    fn lane_change_commits_after_thirty_steps() {
        let r = road(2);
        let mut v = VehicleState::new("ego", 0.0, 20.0, 1, 5.0);
        v = step_vehicle(&v, &Actuation { accel: 0.0, lane_cmd: LaneCmd::ChangeLeft }, &r, DT);
        assert_eq!(v.lane_change.map(|lc| lc.target_lane), Some(0));
        let mut last = 0.0;
        for _ in 0..LANE_CHANGE_STEPS - 1 {
            let p = v.lane_change.unwrap().progress();
            assert!(p >= last);
            last = p;
            v = step_vehicle(&v, &Actuation::keep(0.0), &r, DT);
        }
        assert!(v.lane_change.is_some());
        v = step_vehicle(&v, &Actuation::keep(0.0), &r, DT);
        assert_eq!(v.lane, 0);
        assert!(v.lane_change.is_none());
    }

    #[test]
    fn invalid_lane_commands_are_ignored() {
        let r = RoadConfig { has_shoulder: false, ..road(2) };
        let v = VehicleState::new("ego", 0.0, 20.0, 0, 5.0);
        let left = step_vehicle(&v, &Actuation { accel: 0.0, lane_cmd: LaneCmd::ChangeLeft }, &r, DT);
        assert!(left.lane_change.is_none());
        let v1 = VehicleState { lane: 1, ..v };
        let right = step_vehicle(&v1, &Actuation { accel: 0.0, lane_cmd: LaneCmd::ChangeRight }, &r, DT);
        assert!(right.lane_change.is_none());
        let shoulder = step_vehicle(&v1, &Actuation { accel: 0.0, lane_cmd: LaneCmd::ToShoulder }, &r, DT);
        assert!(shoulder.lane_change.is_none());
    }

    #[test]
    fn cruise_at_target_is_zero_accel() {
        let script = ActorScript::new(vec![ScriptPhase {
            start_t: 0.0,
            behavior: ActorBehavior::Cruise { v_target: 20.0 },
        }]);
        let v = VehicleState::new("a", 0.0, 20.0, 0, 5.0);
        assert_eq!(actor_behavior(&script, 0, &v).accel, 0.0);
    }

    #[test]
    fn stop_phase_brakes_until_stationary() {
        let script = ActorScript::new(vec![ScriptPhase { start_t: 0.0, behavior: ActorBehavior::Stop }]);
        let v = VehicleState::new("a", 0.0, 4.0, 0, 5.0);
        assert_eq!(actor_behavior(&script, 3, &v).accel, -8.0);
        let stopped = VehicleState { v: 0.0, ..v };
        assert_eq!(actor_behavior(&script, 3, &stopped).accel, 0.0);
    }

    #[test]
    fn cut_in_steers_toward_target() {
        let script = ActorScript::new(vec![ScriptPhase {
            start_t: 0.0,
            behavior: ActorBehavior::CutIn { target_lane: 1 },
        }]);
        let from_left = VehicleState::new("a", 0.0, 20.0, 0, 5.0);
        assert_eq!(actor_behavior(&script, 0, &from_left).lane_cmd, LaneCmd::ChangeRight);
        let from_right = VehicleState::new("a", 0.0, 20.0, 2, 5.0);
        assert_eq!(actor_behavior(&script, 0, &from_right).lane_cmd, LaneCmd::ChangeLeft);
    }

    #[test]
    fn brake_phase_boundary() {
        let script = ActorScript::new(vec![
            ScriptPhase { start_t: 0.0, behavior: ActorBehavior::Cruise { v_target: 20.0 } },
            ScriptPhase { start_t: 2.0, behavior: ActorBehavior::Brake { a_brake: -8.0 } },
        ]);
        let v = VehicleState::new("a", 0.0, 20.0, 0, 5.0);
        assert_eq!(actor_behavior(&script, 19, &v).accel, 0.0);
        assert_eq!(actor_behavior(&script, 20, &v).accel, -8.0);
    }

    #[test]
    fn collision_geometry() {
        let mut w = WorldState::new(VehicleState::new("ego", 100.0, 0.0, 0, 5.0), vec![], road(2));
        w.actors.push(Actor {
            state: VehicleState::new("a", 103.0, 0.0, 0, 5.0),
            script: ActorScript::default(),
        });
        let rec = detect_collision(&w).expect("collision");
        assert_eq!(rec.gap, -2.0);
        assert_eq!(rec.rear, "ego");

        w.actors[0].state.lane = 1;
        assert!(detect_collision(&w).is_none());

        w.ego.lane = 1;
        w.actors[0].state.lane = 0;
        w.actors[0].state.lane_change = Some(LaneChange { target_lane: 1, steps_done: 12 });
        assert!(detect_collision(&w).is_some());
    }

    #[test]
    fn only_ego_moves_without_actors() {
        let w = WorldState::new(VehicleState::new("ego", 0.0, 20.0, 0, 5.0), vec![], road(1));
        let next = step_world(&w, &Actuation::keep(0.0));
        assert_eq!(next.step, 1);
        assert_eq!(next.t, 0.1);
        assert!((next.ego.s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn step_index_round_trips() {
        for k in 0..500u64 {
            assert_eq!(step_index(step_time(k)), k);
        }
        assert_eq!(step_index(5.0), 50);
        assert_eq!(step_index(0.3), 3);
    }
}
