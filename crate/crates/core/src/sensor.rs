use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::risk::{MonitoredState, ObservedObject};
use crate::sim::WorldState;

/// Range and noise model of one channel's object sensing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub range_ahead: f64,
    pub range_behind: f64,
    pub sigma_s: f64,
    pub sigma_v: f64,
}

impl SensorConfig {
    pub const NOMINAL: SensorConfig = SensorConfig {
        range_ahead: 150.0,
        range_behind: 50.0,
        sigma_s: 0.2,
        sigma_v: 0.1,
    };

    pub const SUPERVISOR: SensorConfig = SensorConfig {
        range_ahead: 80.0,
        range_behind: 20.0,
        sigma_s: 0.3,
        sigma_v: 0.15,
    };

    pub fn noiseless(self) -> Self {
        Self {
            sigma_s: 0.0,
            sigma_v: 0.0,
            ..self
        }
    }
}

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
    } else {
        0.0
    }
}

/// Ground-truth detections within range, with additive Gaussian noise.
/// Ego state comes from odometry and is exact. Actors are visited in id
/// order so the noise each one receives does not depend on list order.
pub fn sense(world: &WorldState, cfg: &SensorConfig, rng: &mut impl Rng) -> MonitoredState {
    let ego = &world.ego;
    let mut actors: Vec<_> = world.actors.iter().map(|a| &a.state).collect();
    actors.sort_by(|a, b| a.id.cmp(&b.id));
    let objects = actors
        .into_iter()
        .filter_map(|a| {
            let rel = a.s - ego.s;
            let ns = gaussian(rng, cfg.sigma_s);
            let nv = gaussian(rng, cfg.sigma_v);
            (rel <= cfg.range_ahead && rel >= -cfg.range_behind).then(|| ObservedObject {
                id: Some(a.id.clone()),
                s: a.s + ns,
                v: (a.v + nv).max(0.0),
                lane: a.lane,
                target_lane: a.lane_change.map(|lc| lc.target_lane),
                length: a.length,
                observed_t: world.t,
            })
        })
        .collect();
    MonitoredState {
        t: world.t,
        ego_s: ego.s,
        ego_v: ego.v,
        ego_lane: ego.lane,
        ego_target_lane: ego.lane_change.map(|lc| lc.target_lane),
        ego_length: ego.length,
        objects,
    }
}

/// Noise-free, range-free view of the world used by the omniscient
/// classifier.
pub fn ground_truth(world: &WorldState) -> MonitoredState {
    let cfg = SensorConfig {
        range_ahead: f64::INFINITY,
        range_behind: f64::INFINITY,
        sigma_s: 0.0,
        sigma_v: 0.0,
    };
    sense(world, &cfg, &mut rand::rngs::mock::StepRng::new(0, 0))
}
