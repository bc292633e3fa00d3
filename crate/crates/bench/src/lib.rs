//! Fixtures shared by the benchmarks.

use mtc_core::agent::Action;
use mtc_core::engine::Simulation;
use mtc_core::learner::{Learner, LearnerConfig, Transition};
use mtc_core::network::{generate_grid, GridGeometry, Network};
use mtc_core::policy::RandomPolicy;
use mtc_core::{DemandSchedule, EngineConfig};

pub const OBS_LEN: usize = 12;

pub fn two_intersections() -> Network {
    generate_grid(1, 1, &GridGeometry::new(1, 2)).expect("valid grid")
}

/// A rollout advanced `warmup` seconds so the network holds traffic.
pub fn warm_simulation(net: &Network, warmup: f64) -> Simulation<'_> {
    let sched = DemandSchedule::new(300, 1000.0, 0.6);
    let cfg = EngineConfig {
        record_decisions: false,
        ..EngineConfig::default()
    };
    let mut sim = Simulation::new(net, cfg, &sched, 1).expect("valid rollout");
    sim.run(warmup, &mut RandomPolicy);
    sim
}

/// Deterministic pseudo-observation.
pub fn observation(i: usize) -> Vec<f64> {
    (0..OBS_LEN).map(|k| ((i * 31 + k * 7) % 13) as f64 / 2.0).collect()
}

/// Default learner with a buffer already holding `n` transitions.
pub fn filled_learner(n: usize) -> Learner {
    let mut l = Learner::new(LearnerConfig::default(), OBS_LEN, 0).expect("valid config");
    for i in 0..n {
        l.buffer.push(Transition {
            obs: observation(i),
            action: if i % 2 == 0 { Action::Go } else { Action::Stop },
            reward: (i % 7) as f64 - 3.0,
            next_obs: observation(i + 1),
            terminal: i % 50 == 0,
            priority: 0.0,
        });
    }
    l
}
