//! Scenario files (TOML) and their load-time validation.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fault::{FaultKind, FaultSpec};
use crate::risk::RiskParams;
use crate::sim::{step_index, Actor, ActorBehavior, ActorScript, RoadConfig, ScriptPhase, VehicleState, WorldState, V_MAX};
use crate::supervisor::SupervisorConfig;
use crate::Error;

fn default_length() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoConfig {
    /// Rear-bumper position (m).
    pub s: f64,
    pub v: f64,
    pub lane: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    pub id: String,
    pub s: f64,
    pub v: f64,
    pub lane: usize,
    #[serde(default = "default_length")]
    pub length: f64,
    pub script: Vec<ScriptPhase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Simulated time in seconds.
    pub duration: f64,
    pub set_speed: f64,
    pub road: RoadConfig,
    pub ego: EgoConfig,
    #[serde(default)]
    pub risk: RiskParams,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
    #[serde(default)]
    pub actors: Vec<ActorConfig>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
}

/// A validation failure at a field path such as `actors[1].script[0].start_t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let de = toml::Deserializer::new(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::Validation(vec![FieldError {
                path: e.path().to_string(),
                message: e.inner().message().trim().to_string(),
            }])
        })?;
        let errors = cfg.validate();
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Every problem found, each with the path of the offending field.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut err = |path: String, message: String| errs.push(FieldError { path, message });
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;

        if !finite_pos(self.duration) {
            err("duration".into(), "must be a positive number of seconds".into());
        }
        if !(finite_pos(self.set_speed) && self.set_speed <= V_MAX) {
            err("set_speed".into(), format!("must be in (0, {V_MAX}] m/s"));
        }
        if self.road.lane_count == 0 {
            err("road.lane_count".into(), "must be at least 1".into());
        }
        if !finite_pos(self.road.segment_length) {
            err("road.segment_length".into(), "must be positive".into());
        }
        let max_lane = self.road.lane_count.saturating_sub(1) + usize::from(self.road.has_shoulder);
        if self.ego.lane >= self.road.lane_count {
            err("ego.lane".into(), format!("must be a travel lane below {}", self.road.lane_count));
        }
        if !(self.ego.v.is_finite() && (0.0..=V_MAX).contains(&self.ego.v)) {
            err("ego.v".into(), format!("must be in [0, {V_MAX}] m/s"));
        }
        if !self.ego.s.is_finite() {
            err("ego.s".into(), "must be finite".into());
        }
        if !finite_pos(self.ego.length) {
            err("ego.length".into(), "must be positive".into());
        }
        if let Err(m) = self.risk.validate() {
            err("risk".into(), m);
        }

        let mut seen = HashSet::new();
        for (i, a) in self.actors.iter().enumerate() {
            let p = |f: &str| format!("actors[{i}].{f}");
            if a.id.is_empty() || a.id == "ego" || !seen.insert(a.id.as_str()) {
                err(p("id"), format!("'{}' is empty, reserved or duplicated", a.id));
            }
            if a.lane > max_lane {
                err(p("lane"), format!("must be at most {max_lane}"));
            }
            if !(a.v.is_finite() && (0.0..=V_MAX).contains(&a.v)) {
                err(p("v"), format!("must be in [0, {V_MAX}] m/s"));
            }
            if !a.s.is_finite() {
                err(p("s"), "must be finite".into());
            }
            if !finite_pos(a.length) {
                err(p("length"), "must be positive".into());
            }
            match a.script.first() {
                None => err(p("script"), "must cover the run from t = 0".into()),
                Some(first) if step_index(first.start_t) != 0 => {
                    err(p("script[0].start_t"), "must be 0 so the script covers the whole run".into())
                }
                _ => {}
            }
            for (k, ph) in a.script.iter().enumerate() {
                let q = |f: &str| format!("actors[{i}].script[{k}].{f}");
                if !(ph.start_t.is_finite() && ph.start_t >= 0.0) {
                    err(q("start_t"), "must be a non-negative time".into());
                }
                if k > 0 && ph.start_t <= a.script[k - 1].start_t {
                    err(q("start_t"), "phases must be in strictly increasing time order".into());
                }
                match ph.behavior {
                    ActorBehavior::Cruise { v_target } if !(v_target.is_finite() && (0.0..=V_MAX).contains(&v_target)) => {
                        err(q("behavior.v_target"), format!("must be in [0, {V_MAX}] m/s"))
                    }
                    ActorBehavior::Brake { a_brake } if !(a_brake.is_finite() && a_brake < 0.0) => {
                        err(q("behavior.a_brake"), "must be a negative acceleration".into())
                    }
                    ActorBehavior::CutIn { target_lane } if target_lane > max_lane => {
                        err(q("behavior.target_lane"), format!("must be at most {max_lane}"))
                    }
                    _ => {}
                }
            }
        }

        let ids: Vec<&str> = self.actors.iter().map(|a| a.id.as_str()).collect();
        for (i, f) in self.faults.iter().enumerate() {
            let p = |x: &str| format!("faults[{i}].{x}");
            if let Err(m) = f.validate_target(&ids) {
                err(p("target"), m);
            }
            if !(f.t_on.is_finite() && f.t_on >= 0.0) {
                err(p("t_on"), "must be a non-negative time".into());
            }
            if let Some(d) = f.duration {
                if !finite_pos(d) {
                    err(p("duration"), "must be positive when given".into());
                }
            }
            if let Some(d) = f.detectability {
                if !f.kind.self_detectable() {
                    err(p("detectability"), format!("{:?} has no self-diagnosis", f.kind));
                } else if !(0.0..=1.0).contains(&d) {
                    err(p("detectability"), "must be in [0, 1]".into());
                }
            }
            let fp = &f.params;
            if let Some(x) = fp.factor {
                if !(x.is_finite() && x > 0.0 && x <= 1.0) {
                    err(p("params.factor"), "must be in (0, 1]".into());
                }
            }
            if f.kind == FaultKind::NcSystematicParam && fp.assumed_brake.is_none_or(|b| !finite_pos(b)) {
                err(p("params.assumed_brake"), "required and positive for NcSystematicParam".into());
            }
            for (name, v) in [
                ("params.range", fp.range),
                ("params.bias_s", fp.bias_s),
                ("params.bias_v", fp.bias_v),
                ("params.phantom_ahead", fp.phantom_ahead),
                ("params.phantom_v", fp.phantom_v),
            ] {
                if v.is_some_and(|x| !x.is_finite()) {
                    err(p(name), "must be finite".into());
                }
            }
        }
        errs
    }

    /// Initial world state.
    pub fn initial_world(&self) -> WorldState {
        let ego = VehicleState::new("ego", self.ego.s, self.ego.v, self.ego.lane, self.ego.length);
        let actors = self
            .actors
            .iter()
            .map(|a| Actor {
                state: VehicleState::new(a.id.clone(), a.s, a.v, a.lane, a.length),
                script: ActorScript::new(a.script.clone()),
            })
            .collect();
        WorldState::new(ego, actors, self.road)
    }

    pub fn steps(&self) -> u64 {
        step_index(self.duration)
    }
}
