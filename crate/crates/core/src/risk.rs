//! Risk estimation over a monitored state and the external-safety-constraint
//! membership test built on it.
//!
//! Risk is the deceleration the ego would need, braking at a constant rate,
//! to avoid closing the gap to any in-lane obstacle within the horizon,
//! normalised by the braking authority assumed for avoidance. Obstacles are
//! predicted at constant velocity. When even full avoidance braking cannot
//! prevent a collision the risk saturates at [`RISK_CAP`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::DT;

/// Risk value encoding "collision unavoidable".
pub const RISK_CAP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("vehicles already overlap (gap {gap} m)")]
    AlreadyColliding { gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskParams {
    /// Look-ahead horizon in seconds.
    pub horizon: f64,
    /// Threshold separating the safe set from hazardous events.
    pub r_max: f64,
    /// Braking authority assumed for avoidance (m/s²).
    pub a_avoid_max: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            horizon: 3.0,
            r_max: 0.8,
            a_avoid_max: 8.0,
        }
    }
}

impl RiskParams {
    /// Same parameters with the avoidance authority limited to `brake`.
    pub fn limited_to(&self, brake: f64) -> Self {
        Self {
            a_avoid_max: self.a_avoid_max.min(brake),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.horizon > 0.0) {
            return Err("horizon must be > 0".into());
        }
        let steps = self.horizon / DT;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err("horizon must be a multiple of the step period".into());
        }
        if !(self.r_max > 0.0) {
            return Err("r_max must be > 0".into());
        }
        if !(self.a_avoid_max > 0.0) {
            return Err("a_avoid_max must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedObject {
    /// Sensor-provided identity; `None` for detections without one.
    pub id: Option<String>,
    pub s: f64,
    pub v: f64,
    pub lane: usize,
    pub target_lane: Option<usize>,
    pub length: f64,
    pub observed_t: f64,
}

impl ObservedObject {
    pub fn occupies(&self, lane: usize) -> bool {
        self.lane == lane || self.target_lane == Some(lane)
    }
}

/// A channel's belief about the monitored part of the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoredState {
    pub t: f64,
    pub ego_s: f64,
    pub ego_v: f64,
    pub ego_lane: usize,
    pub ego_target_lane: Option<usize>,
    pub ego_length: f64,
    pub objects: Vec<ObservedObject>,
}

impl MonitoredState {
    /// Whether `obj` shares a lane with the ego's occupied lanes. An object
    /// changing lanes counts in both its source and target lanes.
    pub fn in_ego_lane(&self, obj: &ObservedObject) -> bool {
        obj.occupies(self.ego_lane) || self.ego_target_lane.is_some_and(|l| obj.occupies(l))
    }

    /// Copy of this state with the ego placed in `lane` (no lane change).
    pub fn as_if_in_lane(&self, lane: usize) -> MonitoredState {
        MonitoredState {
            ego_lane: lane,
            ego_target_lane: None,
            ..self.clone()
        }
    }
}

/// Controlled (ego behaviour) part of a scenario sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlledState {
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub t: f64,
    pub monitored: MonitoredState,
    pub controlled: ControlledState,
}

/// A driving scenario as a time-indexed sequence of monitored and
/// controlled states, sampled every step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub samples: Vec<ScenarioSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Deceleration {
    Finite(f64),
    Unavoidable,
}

/// Minimal constant deceleration keeping the gap open over `horizon`,
/// without regard to braking authority.
///
/// With closing speed `w` and braking `a` the closing distance peaks when the
/// ego has slowed to the obstacle speed, at `t* = w / a`, reaching
/// `w² / 2a`. If that instant lies beyond the horizon the peak within the
/// horizon is at `horizon` itself.
pub fn required_deceleration_raw(ego_v: f64, obstacle_v: f64, gap: f64, horizon: f64) -> Result<f64, RiskError> {
    if gap <= 0.0 {
        return Err(RiskError::AlreadyColliding { gap });
    }
    let w = ego_v - obstacle_v;
    if w <= 0.0 || gap >= w * horizon {
        return Ok(0.0);
    }
    if 2.0 * gap / w <= horizon {
        Ok(w * w / (2.0 * gap))
    } else {
        Ok(2.0 * (w * horizon - gap) / (horizon * horizon))
    }
}

/// Required deceleration for an ego following an obstacle `gap` metres
/// ahead, or [`Deceleration::Unavoidable`] when it exceeds the avoidance
/// authority.
pub fn required_deceleration(
    ego_v: f64,
    obstacle_v: f64,
    gap: f64,
    params: &RiskParams,
) -> Result<Deceleration, RiskError> {
    let a = required_deceleration_raw(ego_v, obstacle_v, gap, params.horizon)?;
    Ok(if a > params.a_avoid_max {
        Deceleration::Unavoidable
    } else {
        Deceleration::Finite(a)
    })
}

/// Risk contributed by a single object, `None` when it is not relevant
/// (other lane or behind the ego).
pub fn object_risk(m: &MonitoredState, obj: &ObservedObject, params: &RiskParams) -> Option<f64> {
    if !m.in_ego_lane(obj) || obj.s < m.ego_s {
        return None;
    }
    let gap = obj.s - m.ego_s - m.ego_length;
    Some(match required_deceleration(m.ego_v, obj.v, gap, params) {
        Ok(Deceleration::Finite(a)) => a / params.a_avoid_max,
        Ok(Deceleration::Unavoidable) | Err(RiskError::AlreadyColliding { .. }) => RISK_CAP,
    })
}

pub fn estimate_risk(m: &MonitoredState, params: &RiskParams) -> f64 {
    m.objects
        .iter()
        .filter_map(|o| object_risk(m, o, params))
        .fold(0.0, f64::max)
}

pub fn in_esc(m: &MonitoredState, params: &RiskParams) -> bool {
    estimate_risk(m, params) < params.r_max
}

/// Brute-force reference for [`estimate_risk`]: tries a grid of constant
/// decelerations, forward-simulating ego and obstacles at millisecond
/// resolution, and reports the smallest one that never closes a gap.
pub mod oracle {
    use super::{MonitoredState, RiskParams, RISK_CAP};

    pub const CANDIDATES: usize = 200;
    pub const SIM_DT: f64 = 1e-3;

    struct Obstacle {
        s: f64,
        v: f64,
    }

    fn collides(ego_s: f64, ego_v: f64, ego_len: f64, obstacles: &[Obstacle], decel: f64, horizon: f64) -> bool {
        let steps = (horizon / SIM_DT).round() as usize;
        let (mut s, mut v) = (ego_s, ego_v);
        for k in 0..=steps {
            let t = k as f64 * SIM_DT;
            if obstacles.iter().any(|o| o.s + o.v * t - s - ego_len < -1e-6) {
                return true;
            }
            let v_next = v - decel * SIM_DT;
            if v_next <= 0.0 {
                if v > 0.0 {
                    s += v * v / (2.0 * decel);
                }
                v = 0.0;
            } else {
                s += 0.5 * (v + v_next) * SIM_DT;
                v = v_next;
            }
        }
        false
    }

    pub fn risk_oracle(m: &MonitoredState, params: &RiskParams) -> f64 {
        let ego_lanes = [Some(m.ego_lane), m.ego_target_lane];
        let obstacles: Vec<Obstacle> = m
            .objects
            .iter()
            .filter(|o| o.s >= m.ego_s)
            .filter(|o| {
                ego_lanes
                    .iter()
                    .flatten()
                    .any(|&l| o.lane == l || o.target_lane == Some(l))
            })
            .map(|o| Obstacle { s: o.s, v: o.v })
            .collect();
        if obstacles.is_empty() {
            return 0.0;
        }
        (0..CANDIDATES)
            .map(|k| params.a_avoid_max * k as f64 / (CANDIDATES - 1) as f64)
            .find(|&a| !collides(m.ego_s, m.ego_v, m.ego_length, &obstacles, a, params.horizon))
            .map_or(RISK_CAP, |a| a / params.a_avoid_max)
    }

    /// The fixed evaluation grid: 10 ego speeds in [5, 35] m/s × 10 gaps in
    /// [5, 140] m × 10 obstacle speeds in [0, 30] m/s.
    pub fn evaluation_grid() -> Vec<(f64, f64, f64)> {
        let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / 9.0;
        let mut grid = Vec::with_capacity(1000);
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    grid.push((lin(5.0, 35.0, i), lin(5.0, 140.0, j), lin(0.0, 30.0, k)));
                }
            }
        }
        grid
    }
}

pub use oracle::risk_oracle;

/// Single-obstacle monitored state used by the oracle grid and tests.
pub fn single_obstacle_state(ego_v: f64, gap: f64, obstacle_v: f64) -> MonitoredState {
    const LEN: f64 = 5.0;
    MonitoredState {
        t: 0.0,
        ego_s: 0.0,
        ego_v,
        ego_lane: 0,
        ego_target_lane: None,
        ego_length: LEN,
        objects: vec![ObservedObject {
            id: Some("obstacle".into()),
            s: gap + LEN,
            v: obstacle_v,
            lane: 0,
            target_lane: None,
            length: LEN,
            observed_t: 0.0,
        }],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub points: usize,
    pub max_abs_diff: f64,
    pub worst_point: (f64, f64, f64),
    pub tolerance: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.max_abs_diff <= self.tolerance
    }
}

/// Compares [`estimate_risk`] with [`risk_oracle`] over the evaluation grid.
pub fn oracle_check(params: &RiskParams, tolerance: f64) -> OracleReport {
    let grid = oracle::evaluation_grid();
    let mut worst = (0.0, (0.0, 0.0, 0.0));
    for &(v, g, vo) in &grid {
        let m = single_obstacle_state(v, g, vo);
        let diff = (estimate_risk(&m, params) - risk_oracle(&m, params)).abs();
        if diff > worst.0 {
            worst = (diff, (v, g, vo));
        }
    }
    OracleReport {
        points: grid.len(),
        max_abs_diff: worst.0,
        worst_point: worst.1,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> RiskParams {
        RiskParams::default()
    }

    #[test]
    fn stopped_obstacle_closed_form() {
        assert_eq!(required_deceleration_raw(20.0, 0.0, 25.0, 3.0).unwrap(), 8.0);
        // 100 m is beyond the 3 s horizon at 20 m/s: nothing needed within it
        assert_eq!(required_deceleration_raw(20.0, 0.0, 100.0, 3.0).unwrap(), 0.0);
        assert_eq!(required_deceleration_raw(20.0, 0.0, 100.0, 10.0).unwrap(), 2.0);
    }

    #[test]
    fn faster_obstacle_needs_nothing() {
        assert_eq!(required_deceleration_raw(20.0, 25.0, 10.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn overlapping_input_is_an_error() {
        assert!(matches!(
            required_deceleration_raw(20.0, 0.0, 0.0, 3.0),
            Err(RiskError::AlreadyColliding { .. })
        ));
    }

    #[test]
    fn risk_examples() {
        let empty = MonitoredState {
            objects: vec![],
            ..single_obstacle_state(20.0, 25.0, 0.0)
        };
        assert_eq!(estimate_risk(&empty, &params()), 0.0);
        assert_eq!(estimate_risk(&single_obstacle_state(20.0, 25.0, 0.0), &params()), 1.0);

        let mut two = single_obstacle_state(20.0, 25.0, 0.0);
        let mut far = two.objects[0].clone();
        far.s = 105.0; // 100 m gap with a 10 s horizon → 2.0 m/s² → 0.25
        two.objects.push(far);
        let long = RiskParams { horizon: 10.0, ..params() };
        let only_far = MonitoredState {
            objects: vec![two.objects[1].clone()],
            ..two.clone()
        };
        assert_eq!(estimate_risk(&only_far, &long), 0.25);
        assert_eq!(estimate_risk(&two, &long), 1.0);
    }

    #[test]
    fn esc_boundary_is_excluded() {
        let p = RiskParams { r_max: 1.0, ..params() };
        // risk exactly 1.0
        assert!(!in_esc(&single_obstacle_state(20.0, 25.0, 0.0), &p));
        assert!(in_esc(&single_obstacle_state(20.0, 25.0, 30.0), &p));
    }

    #[test]
    fn unavoidable_is_capped() {
        let m = single_obstacle_state(30.0, 5.0, 0.0);
        assert_eq!(estimate_risk(&m, &params()), RISK_CAP);
        assert_eq!(risk_oracle(&m, &params()), RISK_CAP);
    }

    #[test]
    fn oracle_matches_closed_form_examples() {
        let r = risk_oracle(&single_obstacle_state(20.0, 25.0, 0.0), &params());
        assert!((r - 1.0).abs() <= 0.05, "{r}");
        let long = RiskParams { horizon: 10.0, ..params() };
        let r = risk_oracle(&single_obstacle_state(20.0, 100.0, 0.0), &long);
        assert!((r - 0.25).abs() <= 0.05, "{r}");
        assert_eq!(risk_oracle(&single_obstacle_state(20.0, 10.0, 25.0), &params()), 0.0);
    }

    #[test]
    fn cut_in_counts_as_in_lane() {
        let mut m = single_obstacle_state(20.0, 25.0, 0.0);
        m.objects[0].lane = 1;
        assert_eq!(estimate_risk(&m, &params()), 0.0);
        m.objects[0].target_lane = Some(0);
        assert_eq!(estimate_risk(&m, &params()), 1.0);
    }

    #[test]
    fn objects_behind_are_ignored() {
        let mut m = single_obstacle_state(20.0, 25.0, 0.0);
        m.objects[0].s = -30.0;
        assert_eq!(estimate_risk(&m, &params()), 0.0);
    }

    proptest! {
        #[test]
        fn monotone_in_gap(v in 1.0f64..40.0, vo in 0.0f64..40.0, g1 in 0.5f64..200.0, dg in 0.0f64..50.0) {
            let p = params();
            let near = estimate_risk(&single_obstacle_state(v, g1, vo), &p);
            let far = estimate_risk(&single_obstacle_state(v, g1 + dg, vo), &p);
            prop_assert!(far <= near + 1e-12);
        }

        #[test]
        fn monotone_in_speed(v in 1.0f64..40.0, dv in 0.0f64..10.0, vo in 0.0f64..40.0, g in 0.5f64..200.0) {
            let p = params();
            let slow = estimate_risk(&single_obstacle_state(v, g, vo), &p);
            let fast = estimate_risk(&single_obstacle_state(v + dv, g, vo), &p);
            prop_assert!(fast + 1e-12 >= slow);
        }

        #[test]
        fn esc_membership_is_threshold(v in 0.0f64..40.0, vo in 0.0f64..40.0, g in 0.5f64..200.0, r_max in 0.05f64..2.0) {
            let p = RiskParams { r_max, ..params() };
            let m = single_obstacle_state(v, g, vo);
            prop_assert_eq!(in_esc(&m, &p), estimate_risk(&m, &p) < r_max);
        }

        #[test]
        fn doubling_authority_halves_finite_risk(v in 0.0f64..40.0, vo in 0.0f64..40.0, g in 0.5f64..200.0) {
            let p = params();
            let doubled = RiskParams { a_avoid_max: 2.0 * p.a_avoid_max, ..p };
            let m = single_obstacle_state(v, g, vo);
            let r = estimate_risk(&m, &p);
            if r < RISK_CAP {
                prop_assert!((estimate_risk(&m, &doubled) - r / 2.0).abs() < 1e-12);
            }
        }
    }
}
