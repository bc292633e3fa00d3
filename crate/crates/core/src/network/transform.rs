use std::collections::HashSet;

use super::{shortest_route, LaneId, Network, NetworkSpec, Turn};
use crate::error::NetworkError;

/// Replaces every left-turn movement with the straight movement from the same
/// approach lane.
///
/// Routes that turned left are rerouted: they go straight at that point and
/// continue along the cheapest left-free path to their original final lane,
/// or straight on to the boundary when no such path exists. Signal phases
/// lose their left movements; phases emptied by this are dropped and the
/// cycle shortens accordingly. Applying the transform twice is the same as
/// applying it once.
pub fn remove_left_turns(net: &Network) -> Result<Network, NetworkError> {
    if net.count_turns(Turn::Left) == 0 {
        return Ok(net.clone());
    }
    for mv in net.movements().iter().filter(|m| m.turn == Turn::Left) {
        let has_straight = net
            .outgoing(mv.from)
            .iter()
            .any(|&m| net.movement(m).turn == Turn::Straight);
        if !has_straight {
            return Err(NetworkError::NoStraightCounterpart {
                intersection: net.intersection(mv.intersection).name.clone(),
                movement: mv.name.clone(),
            });
        }
    }

    let old = net.to_spec();
    let lefts: HashSet<&str> = net
        .movements()
        .iter()
        .filter(|m| m.turn == Turn::Left)
        .map(|m| m.name.as_str())
        .collect();

    let mut spec = NetworkSpec {
        intersections: old.intersections.clone(),
        lanes: old.lanes.clone(),
        ..Default::default()
    };
    spec.movements = old
        .movements
        .iter()
        .filter(|m| !lefts.contains(m.id.as_str()))
        .cloned()
        .collect();
    for c in &old.conflicts {
        if lefts.contains(c.movement.as_str()) {
            continue;
        }
        let mut c = c.clone();
        c.with.retain(|w| !lefts.contains(w.as_str()));
        if !c.with.is_empty() {
            spec.conflicts.push(c);
        }
    }
    for p in &old.phases {
        let mut p = p.clone();
        let before = p.movements.len();
        p.movements.retain(|m| !lefts.contains(m.as_str()));
        if before > 0 && p.movements.is_empty() {
            continue;
        }
        spec.phases.push(p);
    }

    let bare = Network::from_spec(&spec)?;
    let mut routes = old.routes.clone();
    for (route, old_route) in routes.iter_mut().zip(net.routes()) {
        let Some(rerouted) = reroute(net, &bare, &old_route.lanes) else {
            continue;
        };
        route.lanes = rerouted.iter().map(|l| bare.lane(*l).name.clone()).collect();
    }
    spec.routes = routes;
    Network::from_spec(&spec)
}

/// Lane indices coincide between `old` and `new`: lanes are untouched.
fn reroute(old: &Network, new: &Network, chain: &[LaneId]) -> Option<Vec<LaneId>> {
    let cut = chain.windows(2).position(|p| {
        old.movement_between(p[0], p[1])
            .is_some_and(|m| old.movement(m).turn == Turn::Left)
    })?;
    let approach = chain[cut];
    let destination = *chain.last().unwrap();
    let straight_exit = new
        .outgoing(approach)
        .iter()
        .map(|&m| new.movement(m))
        .find(|m| m.turn == Turn::Straight)
        .map(|m| m.to)
        .expect("checked above");

    let mut lanes = chain[..=cut].to_vec();
    match shortest_route(new, straight_exit, destination, |_| true) {
        Some(rest) => lanes.extend(rest),
        None => {
            let mut seen = HashSet::new();
            let mut cur = straight_exit;
            lanes.push(cur);
            seen.insert(cur);
            while let Some(next) = new
                .outgoing(cur)
                .iter()
                .map(|&m| new.movement(m))
                .find(|m| m.turn == Turn::Straight)
                .map(|m| m.to)
            {
                if !seen.insert(next) {
                    break;
                }
                lanes.push(next);
                cur = next;
            }
        }
    }
    Some(lanes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_grid, parse_network, GridGeometry};

    #[test]
    fn single_left_removed() {
        let doc = "\
[intersection]
id = I
control = unsignalized
zone = Z
[lane]
id = A
length = 50
speed_limit = 10
downstream = I
[lane]
id = B
length = 50
speed_limit = 10
[lane]
id = C
length = 50
speed_limit = 10
[movement]
id = MS
from = A
to = B
turn = straight
[movement]
id = ML
from = A
to = C
turn = left
[route]
id = R
lanes = A C
";
        let net = parse_network(doc).unwrap();
        let out = remove_left_turns(&net).unwrap();
        assert_eq!(out.count_turns(Turn::Left), 0);
        let names: Vec<_> = out.routes()[0].lanes.iter().map(|l| out.lane(*l).name.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
    }

    #[test]
    fn idempotent_on_grid() {
        let net = generate_grid(1, 0, &GridGeometry::new(1, 1)).unwrap();
        let once = remove_left_turns(&net).unwrap();
        assert_eq!(remove_left_turns(&once).unwrap(), once);
    }

    #[test]
    fn left_without_straight_fails_with_intersection_name() {
        let doc = "\
[intersection]
id = Ix
control = unsignalized
zone = Z
[lane]
id = A
length = 50
speed_limit = 10
downstream = Ix
[lane]
id = C
length = 50
speed_limit = 10
[movement]
id = ML
from = A
to = C
turn = left
";
        let err = remove_left_turns(&parse_network(doc).unwrap()).unwrap_err();
        assert!(matches!(err, NetworkError::NoStraightCounterpart { ref intersection, .. } if intersection == "Ix"));
    }

    #[test]
    fn signal_plans_drop_left_phases() {
        let net = generate_grid(0, 1, &GridGeometry::new(1, 1)).unwrap();
        let out = remove_left_turns(&net).unwrap();
        let plan = out.intersections()[0].plan().unwrap();
        assert_eq!(plan.phases.len(), 2);
        assert_eq!(plan.cycle_length, 30.0);
    }
}
