use std::collections::BTreeSet;

use mtc_core::network::{
    generate_grid, parse_network, remove_left_turns, serialize_network, GridGeometry, LaneId, Network,
    NetworkSpec, RouteSpec, Turn,
};
use proptest::prelude::*;

/// Independent connectivity check: consecutive lanes meet at the downstream
/// intersection of the first and some movement joins them there.
fn connected(net: &Network, lanes: &[LaneId]) -> bool {
    !lanes.is_empty()
        && lanes.windows(2).all(|w| {
            let down = net.lane(w[0]).downstream;
            net.movements()
                .iter()
                .any(|m| m.from == w[0] && m.to == w[1] && Some(m.intersection) == down)
        })
}

fn turns_on(net: &Network, lanes: &[LaneId]) -> Vec<Turn> {
    lanes
        .windows(2)
        .map(|w| {
            net.movements()
                .iter()
                .find(|m| m.from == w[0] && m.to == w[1])
                .expect("consecutive lanes joined")
                .turn
        })
        .collect()
}

fn check_invariants(net: &Network) {
    for (i, _) in net.movements().iter().enumerate() {
        let m = mtc_core::MovementId(i);
        let cs = net.conflicts_of(m);
        assert!(!cs.contains(&m), "movement conflicts with itself");
        for &c in cs {
            assert!(net.conflicts_of(c).contains(&m), "asymmetric conflict");
        }
    }
    for ix in net.intersections() {
        if let Some(plan) = ix.plan() {
            let total: f64 = plan.phases.iter().map(|p| p.duration).sum();
            assert!((total - plan.cycle_length).abs() < 1e-9);
            for phase in &plan.phases {
                for &a in &phase.permitted {
                    for &b in &phase.permitted {
                        assert!(!net.conflicts_of(a).contains(&b), "phase permits a conflicting pair");
                    }
                }
            }
        }
    }
    for r in net.routes() {
        assert!(connected(net, &r.lanes), "route {} is not connected", r.name);
    }
}

fn grid_params() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..4, 1usize..5).prop_flat_map(|(rows, cols)| {
        let cells = rows * cols;
        (Just(rows), Just(cols), 0..=cells).prop_flat_map(move |(rows, cols, u)| {
            let lo = if u == 0 { 1 } else { 0 };
            (Just(rows), Just(cols), Just(u), lo..=cells - u)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_grids_are_valid((rows, cols, u, s) in grid_params()) {
        let net = generate_grid(u, s, &GridGeometry::new(rows, cols)).unwrap();
        check_invariants(&net);
        prop_assert_eq!(net.intersections().len(), u + s);
        let signalized = net.intersections().iter().filter(|i| i.is_signalized()).count();
        prop_assert_eq!(signalized, s);
    }

    #[test]
    fn serialization_round_trips((rows, cols, u, s) in grid_params()) {
        let net = generate_grid(u, s, &GridGeometry::new(rows, cols)).unwrap();
        let text = serialize_network(&net);
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(serialize_network(&back), text);
    }

    #[test]
    fn left_turn_removal_is_idempotent((rows, cols, u, s) in grid_params()) {
        let net = generate_grid(u, s, &GridGeometry::new(rows, cols)).unwrap();
        let once = remove_left_turns(&net).unwrap();
        let twice = remove_left_turns(&once).unwrap();
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(once.count_turns(Turn::Left), 0);
        prop_assert_eq!(once.routes().len(), net.routes().len());
        check_invariants(&once);
    }
}

/// Left-free lane chains from every boundary entry to a boundary exit.
fn left_free_chains(net: &Network, limit: usize) -> Vec<Vec<LaneId>> {
    let fed: BTreeSet<LaneId> = net.movements().iter().map(|m| m.to).collect();
    let mut out = Vec::new();
    let mut stack: Vec<Vec<LaneId>> = (0..net.lanes().len())
        .map(LaneId)
        .filter(|l| !fed.contains(l) && net.lane(*l).downstream.is_some())
        .map(|l| vec![l])
        .collect();
    stack.reverse();
    while let Some(chain) = stack.pop() {
        if out.len() == limit {
            break;
        }
        let last = *chain.last().unwrap();
        if net.lane(last).downstream.is_none() {
            out.push(chain);
            continue;
        }
        for m in net.movements().iter().rev() {
            if m.from == last && m.turn != Turn::Left && !chain.contains(&m.to) {
                let mut next = chain.clone();
                next.push(m.to);
                stack.push(next);
            }
        }
    }
    out
}

#[test]
fn fourteen_intersection_route_set_survives_the_transform() {
    let grid = generate_grid(12, 2, &GridGeometry::default()).unwrap();
    let with_left: Vec<Vec<LaneId>> = grid
        .routes()
        .iter()
        .filter(|r| turns_on(&grid, &r.lanes).contains(&Turn::Left))
        .take(61)
        .map(|r| r.lanes.clone())
        .collect();
    let without = left_free_chains(&grid, 139);
    assert_eq!((with_left.len(), without.len()), (61, 139));

    let mut spec: NetworkSpec = grid.to_spec();
    spec.routes = with_left
        .iter()
        .chain(&without)
        .enumerate()
        .map(|(i, lanes)| RouteSpec {
            id: format!("R{i}"),
            lanes: lanes.iter().map(|&l| grid.lane(l).name.clone()).collect(),
            weight: 1.0,
        })
        .collect();
    let net = Network::from_spec(&spec).unwrap();
    let lefty = net
        .routes()
        .iter()
        .filter(|r| turns_on(&net, &r.lanes).contains(&Turn::Left))
        .count();
    assert_eq!((net.routes().len(), lefty), (200, 61));

    let out = remove_left_turns(&net).unwrap();
    assert_eq!(out.routes().len(), 200);
    assert_eq!(out.count_turns(Turn::Left), 0);
    for r in out.routes() {
        assert!(connected(&out, &r.lanes));
        assert!(!turns_on(&out, &r.lanes).contains(&Turn::Left));
    }
    let by_name = |n: &Network, name: &str| n.routes().iter().find(|r| r.name == name).unwrap().lanes.clone();
    for i in 61..200 {
        let name = format!("R{i}");
        let a: Vec<&str> = by_name(&net, &name).iter().map(|&l| net.lane(l).name.as_str()).collect();
        let b: Vec<&str> = by_name(&out, &name).iter().map(|&l| out.lane(l).name.as_str()).collect();
        assert_eq!(a, b, "left-free route {name} changed");
    }
}

#[test]
fn left_free_network_is_unchanged() {
    let grid = generate_grid(2, 0, &GridGeometry::new(1, 2)).unwrap();
    let flat = remove_left_turns(&grid).unwrap();
    assert_eq!(remove_left_turns(&flat).unwrap(), flat);
    assert_eq!(serialize_network(&remove_left_turns(&flat).unwrap()), serialize_network(&flat));
}

#[test]
fn fourteen_intersection_grid_round_trips() {
    let net = generate_grid(12, 2, &GridGeometry::default()).unwrap();
    assert_eq!(parse_network(&serialize_network(&net)).unwrap(), net);
}
