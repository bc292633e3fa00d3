use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{LaneId, Movement, Network, Turn};

/// Extra cost, in meters of travel, charged for turning.
fn turn_penalty(turn: Turn) -> f64 {
    match turn {
        Turn::Straight => 0.0,
        Turn::Right => 20.0,
        Turn::Left => 60.0,
    }
}

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    lane: LaneId,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, ties broken on lane index for determinism.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.lane.cmp(&self.lane))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest lane chain from `from` to `to` using only movements accepted by
/// `allow`. Cost is lane length plus a per-turn penalty.
pub fn shortest_route(
    net: &Network,
    from: LaneId,
    to: LaneId,
    allow: impl Fn(&Movement) -> bool,
) -> Option<Vec<LaneId>> {
    let n = net.lanes().len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<LaneId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[from.0] = 0.0;
    heap.push(Entry {
        cost: 0.0,
        lane: from,
    });
    while let Some(Entry { cost, lane }) = heap.pop() {
        if lane == to {
            break;
        }
        if cost > dist[lane.0] {
            continue;
        }
        for &m in net.outgoing(lane) {
            let mv = net.movement(m);
            if !allow(mv) {
                continue;
            }
            let next = cost + net.lane(mv.to).length + turn_penalty(mv.turn);
            if next < dist[mv.to.0] {
                dist[mv.to.0] = next;
                prev[mv.to.0] = Some(lane);
                heap.push(Entry {
                    cost: next,
                    lane: mv.to,
                });
            }
        }
    }
    if !dist[to.0].is_finite() {
        return None;
    }
    let mut chain = vec![to];
    let mut cur = to;
    while let Some(p) = prev[cur.0] {
        chain.push(p);
        cur = p;
    }
    chain.reverse();
    Some(chain)
}
