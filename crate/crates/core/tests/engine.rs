use std::collections::BTreeSet;

use mtc_core::agent::{compute_reward, Action};
use mtc_core::engine::{EventType, Simulation};
use mtc_core::network::{generate_grid, GridGeometry};
use mtc_core::policy::{AlwaysGo, RandomPolicy};
use mtc_core::{run_rollout, CollisionKind, DemandSchedule, EngineConfig, RewardWeights, VehicleKind};
use proptest::prelude::*;

fn csv_bytes(log: &mtc_core::EventLog) -> Vec<u8> {
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rollouts_are_pure_functions_of_the_seed(seed in any::<u64>(), rv in 0.0f64..=1.0) {
        let net = generate_grid(1, 1, &GridGeometry::new(1, 2)).unwrap();
        let sched = DemandSchedule::new(80, 200.0, rv);
        let cfg = EngineConfig::default();
        let (la, sa) = run_rollout(&net, &sched, &cfg, &mut RandomPolicy, seed, 200.0).unwrap();
        let (lb, sb) = run_rollout(&net, &sched, &cfg, &mut RandomPolicy, seed, 200.0).unwrap();
        prop_assert_eq!(&sa, &sb);
        prop_assert_eq!(csv_bytes(&la), csv_bytes(&lb));
    }

    #[test]
    fn collision_counts_are_bounded(seed in any::<u64>(), rv in 0.0f64..=1.0) {
        let net = generate_grid(2, 0, &GridGeometry::new(1, 2)).unwrap();
        let sched = DemandSchedule::new(120, 300.0, rv);
        let (log, s) = run_rollout(&net, &sched, &EngineConfig::default(), &mut RandomPolicy, seed, 300.0).unwrap();
        let events = log.collisions().count() as u64;
        prop_assert_eq!(events, s.collision_events);
        prop_assert!(s.collided <= 2 * s.collision_events);
        prop_assert!(s.collided <= s.spawned);
        prop_assert_eq!(s.spawned, s.departed + s.active + s.collision_removed);
        let ids: BTreeSet<u64> = log.collisions().flat_map(|c| c.vehicles).collect();
        prop_assert_eq!(ids.len() as u64, s.collided);
        prop_assert_eq!(s.collision_rate(), (s.departed > 0).then(|| s.collided as f64 / s.departed as f64));
    }

    #[test]
    fn safety_term_is_never_positive(delay in 0.0f64..1e4, go in any::<bool>(), alpha in 1e-3f64..10.0, beta in 1e-3f64..100.0) {
        let w = RewardWeights { alpha, beta_penalty: beta };
        let action = if go { Action::Go } else { Action::Stop };
        let safety = compute_reward(delay, action, true, &w) - compute_reward(delay, action, false, &w);
        prop_assert!(safety <= 0.0);
        prop_assert!((safety + beta).abs() < 1e-9 * (1.0 + alpha * delay));
    }
}

#[test]
fn signalized_grid_without_robots_has_no_crossing_collisions() {
    let net = generate_grid(0, 4, &GridGeometry::new(2, 2)).unwrap();
    let sched = DemandSchedule::new(300, 600.0, 0.0);
    for seed in 0..3 {
        let (log, s) = run_rollout(&net, &sched, &EngineConfig::default(), &mut AlwaysGo, seed, 600.0).unwrap();
        assert_eq!(s.crossing_events, 0, "seed {seed}");
        assert!(log.collisions().all(|c| c.kind != CollisionKind::Crossing));
        assert!(s.departed > 0);
    }
}

#[test]
fn observations_are_pure() {
    let net = generate_grid(1, 0, &GridGeometry::new(1, 1)).unwrap();
    let sched = DemandSchedule::new(200, 300.0, 0.6);
    let mut sim = Simulation::new(&net, EngineConfig::default(), &sched, 3).unwrap();
    let mut checked = 0;
    for _ in 0..2000 {
        sim.step(&mut RandomPolicy);
        let rvs: Vec<u64> = sim
            .world()
            .vehicles()
            .iter()
            .filter(|v| v.kind == VehicleKind::Rv && v.controlled)
            .map(|v| v.id)
            .collect();
        for id in rvs {
            let a = sim.observe(id).unwrap();
            let b = sim.observe(id).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.len(), mtc_core::agent::observation_len(&net));
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn decisions_appear_only_for_robots() {
    let net = generate_grid(1, 0, &GridGeometry::new(1, 1)).unwrap();
    let sched = DemandSchedule::new(100, 300.0, 0.5);
    let cfg = EngineConfig {
        record_decisions: true,
        ..EngineConfig::default()
    };
    let (log, s) = run_rollout(&net, &sched, &cfg, &mut RandomPolicy, 1, 300.0).unwrap();
    assert_eq!(log.count(EventType::Decision) as u64, s.decisions);
    assert!(s.decisions > 0);
}
