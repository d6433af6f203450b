//! Typed fault catalog, activation windows and the corruptions applied at
//! component boundaries.
//!
//! | Kind                        | Hazard source (division of responsibilities) |
//! |-----------------------------|-----------------------------------------------|
//! | `NcSilence`                 | Random HW faults in Nc                        |
//! | `NcStuckOutput`             | Random HW faults in Nc                        |
//! | `NcRandomCorruption`        | Random HW faults in Nc                        |
//! | `NcSystematicParam`         | Systematic faults in Nc                       |
//! | `NcFalseNegative`           | Performance limitations in Nc                 |
//! | `NcFalsePositive`           | Performance limitations in Nc                 |
//! | `NcSensorBias`              | Performance limitations in Nc                 |
//! | `ScSilence`                 | Random HW faults in Sc                        |
//! | `ScFalsePositivePerception` | Performance limitations in Sc                 |
//! | `PlatformBrakeDegrade`      | Faults in the platform                        |
//!
//! Operational situations are expressed as actor scripts, not faults.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::platform::Setpoint;
use crate::risk::ObservedObject;
use crate::sim::step_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    NcSilence,
    NcStuckOutput,
    NcRandomCorruption,
    NcSystematicParam,
    NcFalseNegative,
    NcFalsePositive,
    NcSensorBias,
    ScSilence,
    ScFalsePositivePerception,
    PlatformBrakeDegrade,
}

/// Hazard-source row a fault kind belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HazardSource {
    RandomHwNc,
    SystematicNc,
    PerformanceLimitationNc,
    RandomHwSc,
    PerformanceLimitationSc,
    Platform,
}

impl FaultKind {
    pub const ALL: [FaultKind; 10] = [
        FaultKind::NcSilence,
        FaultKind::NcStuckOutput,
        FaultKind::NcRandomCorruption,
        FaultKind::NcSystematicParam,
        FaultKind::NcFalseNegative,
        FaultKind::NcFalsePositive,
        FaultKind::NcSensorBias,
        FaultKind::ScSilence,
        FaultKind::ScFalsePositivePerception,
        FaultKind::PlatformBrakeDegrade,
    ];

    pub fn hazard_source(self) -> HazardSource {
        use FaultKind::*;
        match self {
            NcSilence | NcStuckOutput | NcRandomCorruption => HazardSource::RandomHwNc,
            NcSystematicParam => HazardSource::SystematicNc,
            NcFalseNegative | NcFalsePositive | NcSensorBias => HazardSource::PerformanceLimitationNc,
            ScSilence => HazardSource::RandomHwSc,
            ScFalsePositivePerception => HazardSource::PerformanceLimitationSc,
            PlatformBrakeDegrade => HazardSource::Platform,
        }
    }

    /// Faults inside the nominal channel: the ones that can cause
    /// undetected hazardous events.
    pub fn is_nc(self) -> bool {
        matches!(
            self.hazard_source(),
            HazardSource::RandomHwNc | HazardSource::SystematicNc | HazardSource::PerformanceLimitationNc
        )
    }

    pub fn is_sc(self) -> bool {
        matches!(self, FaultKind::ScSilence | FaultKind::ScFalsePositivePerception)
    }

    pub fn is_adi(self) -> bool {
        self.is_nc() || self.is_sc()
    }

    pub fn is_nc_perception(self) -> bool {
        self.hazard_source() == HazardSource::PerformanceLimitationNc
    }

    /// Whether the nominal channel's self-diagnosis can report this kind.
    /// A silent channel reports nothing.
    pub fn self_detectable(self) -> bool {
        self.is_nc() && self != FaultKind::NcSilence
    }

    /// Target prefix accepted for this kind. `NcFalseNegative` targets an
    /// actor id instead.
    pub fn target_boundary(self) -> Option<&'static str> {
        use FaultKind::*;
        match self {
            NcSilence => Some("nc"),
            NcStuckOutput | NcRandomCorruption => Some("nc.setpoint"),
            NcSystematicParam => Some("nc.planner.brake_capability"),
            NcFalseNegative => None,
            NcFalsePositive | NcSensorBias => Some("nc.perception"),
            ScSilence => Some("sc"),
            ScFalsePositivePerception => Some("sc.perception"),
            PlatformBrakeDegrade => Some("platform.brake"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaultParams {
    /// Brake capability multiplier (`PlatformBrakeDegrade`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    /// Half-width of the uniform accel corruption (`NcRandomCorruption`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    /// Brake capability the planner assumes (`NcSystematicParam`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assumed_brake: Option<f64>,
    /// Position offset added to perceived objects (`NcSensorBias`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_s: Option<f64>,
    /// Speed offset added to perceived objects (`NcSensorBias`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_v: Option<f64>,
    /// Phantom distance ahead of the ego front bumper (false positives).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phantom_ahead: Option<f64>,
    /// Phantom speed (false positives).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phantom_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: String,
    pub t_on: f64,
    /// Active duration in seconds; absent means permanent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default)]
    pub params: FaultParams,
    /// Per-step self-report probability, nominal-channel kinds only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectability: Option<f64>,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, target: impl Into<String>, t_on: f64) -> Self {
        Self {
            kind,
            target: target.into(),
            t_on,
            duration: None,
            params: FaultParams::default(),
            detectability: None,
        }
    }

    pub fn onset_step(&self) -> u64 {
        step_index(self.t_on)
    }

    /// Active on `step` iff `t_on <= t < t_on + duration`.
    pub fn is_active(&self, step: u64) -> bool {
        step >= self.onset_step() && self.duration.is_none_or(|d| step < step_index(self.t_on + d))
    }

    pub fn code(&self) -> String {
        format!("{:?}@{}", self.kind, self.target)
    }

    pub fn detectability(&self) -> f64 {
        self.detectability.unwrap_or(0.0)
    }

    /// Checks the target names a boundary that this kind can corrupt.
    pub fn validate_target(&self, actor_ids: &[&str]) -> Result<(), String> {
        match self.kind.target_boundary() {
            None => {
                if actor_ids.contains(&self.target.as_str()) {
                    Ok(())
                } else {
                    Err(format!("unknown actor '{}'", self.target))
                }
            }
            Some(prefix) => {
                let ok = self.target == prefix
                    || (self.kind == FaultKind::PlatformBrakeDegrade && self.target.starts_with("platform.brake."));
                if ok {
                    Ok(())
                } else {
                    Err(format!("{:?} cannot target '{}' (expected '{}')", self.kind, self.target, prefix))
                }
            }
        }
    }
}

/// Faults active at `step`, in declaration order.
pub fn active_faults(specs: &[FaultSpec], step: u64) -> Vec<&FaultSpec> {
    specs.iter().filter(|f| f.is_active(step)).collect()
}

pub fn any_active(active: &[&FaultSpec], kind: FaultKind) -> bool {
    active.iter().any(|f| f.kind == kind)
}

fn phantom(params: &FaultParams, ego_front: f64, lane: usize, t: f64) -> ObservedObject {
    ObservedObject {
        id: None,
        s: ego_front + params.phantom_ahead.unwrap_or(30.0),
        v: params.phantom_v.unwrap_or(0.0),
        lane,
        target_lane: None,
        length: 5.0,
        observed_t: t,
    }
}

/// Applies a perception fault to a list of detections. `ego_front` and
/// `ego_lane` place phantoms relative to the ego.
pub fn corrupt_observation(
    objects: &mut Vec<ObservedObject>,
    fault: &FaultSpec,
    ego_front: f64,
    ego_lane: usize,
    t: f64,
) {
    match fault.kind {
        FaultKind::NcFalseNegative => objects.retain(|o| o.id.as_deref() != Some(fault.target.as_str())),
        FaultKind::NcFalsePositive | FaultKind::ScFalsePositivePerception => {
            objects.push(phantom(&fault.params, ego_front, ego_lane, t))
        }
        FaultKind::NcSensorBias => {
            let (ds, dv) = (fault.params.bias_s.unwrap_or(0.0), fault.params.bias_v.unwrap_or(0.0));
            for o in objects.iter_mut() {
                o.s += ds;
                o.v = (o.v + dv).max(0.0);
            }
        }
        _ => {}
    }
}

/// Applies an output fault to the nominal set-point. `frozen` is the last
/// value emitted before a stuck-output fault became active.
pub fn corrupt_setpoint(sp: Setpoint, fault: &FaultSpec, frozen: Option<Setpoint>, rng: &mut impl Rng) -> Setpoint {
    match fault.kind {
        FaultKind::NcStuckOutput => frozen.unwrap_or(sp),
        FaultKind::NcRandomCorruption => {
            let range = fault.params.range.unwrap_or(4.0).abs();
            let noise = if range > 0.0 { rng.gen_range(-range..=range) } else { 0.0 };
            Setpoint {
                accel_request: sp.accel_request + noise,
                ..sp
            }
        }
        _ => sp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::{Intent, Source};
    use crate::rng::{stream, Stream};
    use crate::sim::LaneCmd;

    fn obj(id: &str, s: f64) -> ObservedObject {
        ObservedObject {
            id: Some(id.into()),
            s,
            v: 10.0,
            lane: 0,
            target_lane: None,
            length: 5.0,
            observed_t: 0.0,
        }
    }

    #[test]
    fn activation_window() {
        let mut f = FaultSpec::new(FaultKind::NcSilence, "nc", 5.0);
        assert!(!f.is_active(49));
        assert!(f.is_active(50));
        assert!(f.is_active(10_000));
        f.duration = Some(1.0);
        assert!(f.is_active(59));
        assert!(!f.is_active(60));
    }

    #[test]
    fn overlapping_faults_both_active() {
        let specs = vec![
            FaultSpec::new(FaultKind::NcSilence, "nc", 1.0),
            FaultSpec::new(FaultKind::ScSilence, "sc", 2.0),
        ];
        assert_eq!(active_faults(&specs, 5).len(), 0);
        assert_eq!(active_faults(&specs, 15).len(), 1);
        assert_eq!(active_faults(&specs, 25).len(), 2);
    }

    #[test]
    fn stuck_output_freezes_value() {
        let mut rng = stream(1, Stream::FaultCorruption);
        let f = FaultSpec::new(FaultKind::NcStuckOutput, "nc.setpoint", 0.0);
        let frozen = Setpoint {
            source: Source::Nominal,
            accel_request: -1.2,
            lane_cmd: LaneCmd::Keep,
            intent: Intent::Normal,
        };
        for a in [0.0, -5.0, 2.0] {
            let sp = Setpoint { accel_request: a, ..frozen };
            assert_eq!(corrupt_setpoint(sp, &f, Some(frozen), &mut rng).accel_request, -1.2);
        }
    }

    #[test]
    fn random_corruption_stays_in_range() {
        let mut rng = stream(3, Stream::FaultCorruption);
        let mut f = FaultSpec::new(FaultKind::NcRandomCorruption, "nc.setpoint", 0.0);
        f.params.range = Some(2.0);
        let sp = Setpoint {
            source: Source::Nominal,
            accel_request: 1.0,
            lane_cmd: LaneCmd::Keep,
            intent: Intent::Normal,
        };
        for _ in 0..200 {
            let a = corrupt_setpoint(sp, &f, None, &mut rng).accel_request;
            assert!((-1.0..=3.0).contains(&a));
        }
    }

    #[test]
    fn false_negative_and_positive() {
        let mut objs = vec![obj("a", 50.0), obj("b", 80.0)];
        corrupt_observation(&mut objs, &FaultSpec::new(FaultKind::NcFalseNegative, "a", 0.0), 5.0, 0, 0.0);
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].id.as_deref(), Some("b"));

        let mut fp = FaultSpec::new(FaultKind::ScFalsePositivePerception, "sc.perception", 0.0);
        fp.params.phantom_ahead = Some(30.0);
        corrupt_observation(&mut objs, &fp, 105.0, 1, 0.0);
        let ghost = objs.last().unwrap();
        assert_eq!(ghost.s, 135.0);
        assert_eq!(ghost.lane, 1);
        assert!(ghost.id.is_none());
    }

    #[test]
    fn target_validation() {
        let actors = ["lead"];
        assert!(FaultSpec::new(FaultKind::NcFalseNegative, "lead", 0.0).validate_target(&actors).is_ok());
        assert!(FaultSpec::new(FaultKind::NcFalseNegative, "ghost", 0.0).validate_target(&actors).is_err());
        assert!(FaultSpec::new(FaultKind::NcSilence, "sc", 0.0).validate_target(&actors).is_err());
        assert!(FaultSpec::new(FaultKind::PlatformBrakeDegrade, "platform.brake.rear", 0.0)
            .validate_target(&actors)
            .is_ok());
    }

    #[test]
    fn every_kind_maps_to_one_source() {
        for kind in FaultKind::ALL {
            let _ = kind.hazard_source();
            assert!(!(kind.is_nc() && kind.is_sc()));
        }
    }
}
