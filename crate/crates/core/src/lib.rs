//! Mixed-traffic intersection microsimulator with a shared-policy Rainbow-DQN
//! learner for robot-vehicle Stop/Go decisions.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: road topology, the grid generator and the left-turn transform.
//! - [`idm`]: car-following and kinematic integration.
//! - [`signal`]: fixed-time signal evaluation.
//! - [`agent`]: observations, actions and rewards for robot vehicles.
//! - [`learner`]: dueling distributional Q-network, prioritized replay, C51 targets.
//! - [`engine`]: deterministic world stepping, spawning and collision detection.
//! - [`metrics`] and [`experiment`]: collision rate, aggregation and sweeps.

pub mod agent;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod idm;
pub mod learner;
pub mod metrics;
pub mod network;
pub mod policy;
pub mod signal;
pub mod training;

pub use agent::{Action, Observation, RewardWeights};
pub use config::{Config, ScenarioConfig};
pub use engine::{
    run_rollout, CollisionEvent, CollisionKind, DemandSchedule, EngineConfig, EventLog,
    RolloutSummary, VehicleKind, VehicleState, WorldState,
};
pub use error::{ConfigError, EngineError, LearnerError, MetricsError, NetworkError, SweepError};
pub use experiment::{ExperimentSpec, ResultRow};
pub use idm::IdmParams;
pub use learner::{Learner, LearnerConfig, QNetwork, ReplayBuffer, Transition};
pub use metrics::collision_rate;
pub use network::{
    GridGeometry, Intersection, IntersectionId, Lane, LaneId, Movement, MovementId, Network,
    Route, RouteId, SignalPlan, Turn,
};
pub use policy::{Policy, PolicySource};
