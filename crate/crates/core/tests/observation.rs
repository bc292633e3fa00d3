use mtc_core::agent::{observation_len, Action, STOP_SPEED};
use mtc_core::engine::{Segment, Simulation};
use mtc_core::network::parse_network;
use mtc_core::policy::Scripted;
use mtc_core::{EngineConfig, LaneId, Network, RouteId, VehicleKind};

const TEE: &str = "
[intersection]
id = T
control = unsignalized
zone = ZT

[lane]
id = A
length = 200
speed_limit = 13.9
downstream = T

[lane]
id = B
length = 200
speed_limit = 13.9
downstream = T

[lane]
id = C
length = 200
speed_limit = 13.9
downstream = T

[lane]
id = EX
length = 200
speed_limit = 13.9

[lane]
id = WX
length = 200
speed_limit = 13.9

[lane]
id = SX
length = 200
speed_limit = 13.9

[movement]
id = AS
from = A
to = EX
turn = straight

[movement]
id = AR
from = A
to = SX
turn = right

[movement]
id = BS
from = B
to = WX
turn = straight

[movement]
id = BL
from = B
to = SX
turn = left

[movement]
id = CL
from = C
to = WX
turn = left

[movement]
id = CR
from = C
to = EX
turn = right

[conflict]
movement = AS
with = BL CL

[conflict]
movement = BL
with = AS CL

[conflict]
movement = CL
with = AS BL BS

[conflict]
movement = BS
with = CL CR

[conflict]
movement = CR
with = BS

[route]
id = RA
lanes = A EX

[route]
id = RB
lanes = B SX

[route]
id = RC
lanes = C WX
";

/// Recomputes an RV's observation straight from the vehicle list.
fn rescan(sim: &Simulation<'_>, net: &Network, rv: u64) -> Vec<f64> {
    let me = sim.world().vehicle(rv).unwrap();
    let ix = net.lane(me.lane).downstream.unwrap();
    let incoming = &net.intersection(ix).incoming;
    let start = incoming.iter().position(|&l| l == me.lane).unwrap();
    let mut out = vec![0.0; observation_len(net)];
    for k in 0..incoming.len() {
        let lane: LaneId = incoming[(start + k) % incoming.len()];
        let on_lane: Vec<_> = sim
            .world()
            .vehicles()
            .iter()
            .filter(|v| sim.path(v.route)[v.segment].segment == Segment::Lane(lane))
            .collect();
        let queue = on_lane.iter().filter(|v| v.speed < STOP_SPEED).count();
        let delay = if on_lane.is_empty() {
            0.0
        } else {
            on_lane.iter().map(|v| v.waiting).sum::<f64>() / on_lane.len() as f64
        };
        let occupied = sim
            .world()
            .vehicles()
            .iter()
            .any(|v| v.zone.is_some_and(|m| net.movement(m).from == lane));
        out[3 * k] = queue as f64;
        out[3 * k + 1] = delay;
        out[3 * k + 2] = if occupied { 1.0 } else { 0.0 };
    }
    out
}

#[test]
fn observation_matches_a_world_rescan() {
    let net = parse_network(TEE).unwrap();
    assert_eq!(net.max_incoming(), 3);
    let mut sim = Simulation::empty(&net, EngineConfig::default(), 1).unwrap();
    let len = 200.0;
    for (r, offsets, kind) in [
        (0, [25.0, 40.0, 80.0], VehicleKind::Rv),
        (1, [10.0, 45.0, 90.0], VehicleKind::Hv),
        (2, [20.0, 60.0, 120.0], VehicleKind::Rv),
    ] {
        for (i, d) in offsets.into_iter().enumerate() {
            let k = if i == 0 { kind } else { VehicleKind::Hv };
            sim.insert_vehicle(k, RouteId(r), 0, len - d, 6.0);
        }
    }
    let mut policy = Scripted::new(vec![Action::Stop, Action::Stop, Action::Go]);
    let mut checked = 0;
    for _ in 0..100 {
        sim.step(&mut policy);
        let rvs: Vec<u64> = sim
            .world()
            .vehicles()
            .iter()
            .filter(|v| v.kind == VehicleKind::Rv && v.controlled)
            .map(|v| v.id)
            .collect();
        for id in rvs {
            assert_eq!(sim.observe(id).unwrap().values, rescan(&sim, &net, id));
            checked += 1;
        }
    }
    assert!(checked > 20, "only {checked} observations checked");
}
