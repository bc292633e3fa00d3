//! Robot-vehicle observations, actions and rewards.

use std::fmt;

use crate::engine::{Simulation, VehicleKind};
use crate::error::EngineError;
use crate::network::{LaneId, Network};

/// Speed below which a vehicle counts as queued, m/s.
pub const STOP_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Go,
    Stop,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Go, Action::Stop];

    pub fn index(self) -> usize {
        match self {
            Action::Go => 0,
            Action::Stop => 1,
        }
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::Go
        } else {
            Action::Stop
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Go => "go",
            Action::Stop => "stop",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub alpha: f64,
    /// Magnitude of the collision penalty; always applied with a negative sign.
    pub beta_penalty: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha: 1.0,
            beta_penalty: 10.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.beta_penalty > 0.0 && self.beta_penalty.is_finite()) {
            return Err(format!("beta_penalty must be > 0, got {}", self.beta_penalty));
        }
        Ok(())
    }
}

/// Per-lane (queue length, mean delay, occupancy) triples, flattened.
///
/// Lanes are the incoming lanes of the RV's intersection, starting with the
/// RV's own lane and continuing in the intersection's incoming order. Smaller
/// intersections are zero-padded so every observation has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub lanes: Vec<LaneId>,
    pub values: Vec<f64>,
}

impl Observation {
    pub fn zeros(len: usize) -> Observation {
        Observation {
            lanes: Vec::new(),
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn queue(&self, k: usize) -> f64 {
        self.values[3 * k]
    }

    pub fn delay(&self, k: usize) -> f64 {
        self.values[3 * k + 1]
    }

    pub fn occupancy(&self, k: usize) -> f64 {
        self.values[3 * k + 2]
    }
}

/// Observation length for a network: three features per incoming lane of the
/// largest intersection.
pub fn observation_len(net: &Network) -> usize {
    3 * net.max_incoming()
}

/// `alpha * R_flow - beta_penalty * collided`, with `R_flow = +d` for Go and
/// `-d` for Stop.
pub fn compute_reward(delay: f64, action: Action, collided: bool, weights: &RewardWeights) -> f64 {
    let flow = match action {
        Action::Go => delay,
        Action::Stop => -delay,
    };
    let safety = if collided { -weights.beta_penalty } else { 0.0 };
    weights.alpha * flow + safety
}

/// Observation for the RV `rv`, which must be inside a control zone.
pub fn build_observation(sim: &Simulation<'_>, rv: u64) -> Result<Observation, EngineError> {
    let v = sim.world().vehicle(rv).ok_or(EngineError::UnknownVehicle(rv))?;
    if v.kind != VehicleKind::Rv || !v.controlled {
        return Err(EngineError::NotInControlZone(rv));
    }
    let lane = v.lane;
    let ix = sim
        .network()
        .lane(lane)
        .downstream
        .ok_or(EngineError::NotInControlZone(rv))?;
    let incoming = &sim.network().intersection(ix).incoming;
    let start = incoming.iter().position(|&l| l == lane).unwrap_or(0);
    let n = incoming.len();
    let mut obs = Observation::zeros(observation_len(sim.network()));
    for k in 0..n {
        let l = incoming[(start + k) % n];
        let stats = sim.lane_stats(l);
        obs.lanes.push(l);
        obs.values[3 * k] = stats.queue as f64;
        obs.values[3 * k + 1] = stats.mean_delay;
        obs.values[3 * k + 2] = if stats.occupied { 1.0 } else { 0.0 };
    }
    Ok(obs)
}
