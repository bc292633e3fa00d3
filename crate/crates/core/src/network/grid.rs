//! Synthetic rectangular grid of 4-way intersections.

use super::{
    shortest_route, ConflictSpec, IntersectionSpec, LaneSpec, MovementSpec, Network, NetworkSpec,
    PhaseSpec, RouteSpec, Turn,
};
use crate::error::NetworkError;

/// Approach side of an intersection, clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    N,
    E,
    S,
    W,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::N, Side::E, Side::S, Side::W];

    fn rotate(self, quarter_turns: usize) -> Side {
        Side::ALL[(self as usize + quarter_turns) % 4]
    }

    /// Side a vehicle leaves through after entering from `self`.
    /// Right-hand traffic: from the north (heading south) a left turn exits east.
    pub fn exit_for(self, turn: Turn) -> Side {
        match turn {
            Turn::Straight => self.rotate(2),
            Turn::Left => self.rotate(1),
            Turn::Right => self.rotate(3),
        }
    }

    fn letter(self) -> char {
        match self {
            Side::N => 'N',
            Side::E => 'E',
            Side::S => 'S',
            Side::W => 'W',
        }
    }

    fn on_main_axis(self) -> bool {
        matches!(self, Side::N | Side::S)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Length of lanes joining two intersections, meters.
    pub link_length: f64,
    /// Length of entry and exit lanes on the network boundary, meters.
    pub boundary_length: f64,
    pub speed_limit: f64,
    /// Green time of each of the four signal phases, seconds.
    pub phase_duration: f64,
    /// All-red interval inserted after every phase, seconds (0 disables).
    pub all_red: f64,
    /// Demand weight of routes entering on the north/south axis relative to east/west.
    pub main_axis_weight: f64,
}

impl GridGeometry {
    pub fn new(rows: usize, cols: usize) -> Self {
        GridGeometry {
            rows,
            cols,
            ..Default::default()
        }
    }
}

impl Default for GridGeometry {
    fn default() -> Self {
        GridGeometry {
            rows: 2,
            cols: 7,
            link_length: 200.0,
            boundary_length: 150.0,
            speed_limit: 13.9,
            phase_duration: 15.0,
            all_red: 0.0,
            main_axis_weight: 1.0,
        }
    }
}

const TURNS: [Turn; 3] = [Turn::Left, Turn::Straight, Turn::Right];

fn turn_letter(t: Turn) -> char {
    match t {
        Turn::Left => 'L',
        Turn::Straight => 'S',
        Turn::Right => 'R',
    }
}

/// Conflict relation of one 4-way intersection, as (approach, turn) pairs.
///
/// Crossing straights conflict; a left turn conflicts with the opposing and
/// both crossing straights and with both crossing lefts; a right turn
/// conflicts only with the straight movement that shares its exit.
pub fn four_way_conflicts() -> Vec<((Side, Turn), (Side, Turn))> {
    let mut pairs = Vec::new();
    for a in Side::ALL {
        let next = a.rotate(1);
        let opposite = a.rotate(2);
        let prev = a.rotate(3);
        pairs.push(((a, Turn::Straight), (next, Turn::Straight)));
        pairs.push(((a, Turn::Left), (opposite, Turn::Straight)));
        pairs.push(((a, Turn::Left), (next, Turn::Straight)));
        pairs.push(((a, Turn::Left), (prev, Turn::Straight)));
        pairs.push(((a, Turn::Left), (next, Turn::Left)));
        pairs.push(((a, Turn::Right), (next, Turn::Straight)));
    }
    pairs
}

struct Layout {
    rows: usize,
    cols: usize,
    count: usize,
}

impl Layout {
    fn present(&self, r: isize, c: isize) -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < self.rows
            && (c as usize) < self.cols
            && (r as usize) * self.cols + (c as usize) < self.count
    }

    fn neighbor(&self, r: usize, c: usize, side: Side) -> Option<(usize, usize)> {
        let (dr, dc) = match side {
            Side::N => (-1, 0),
            Side::S => (1, 0),
            Side::W => (0, -1),
            Side::E => (0, 1),
        };
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        self.present(nr, nc).then_some((nr as usize, nc as usize))
    }
}

fn node(r: usize, c: usize) -> String {
    format!("I{r}_{c}")
}

fn boundary(r: usize, c: usize, side: Side) -> String {
    format!("B{r}_{c}_{}", side.letter())
}

fn lane_name(from: &str, to: &str) -> String {
    format!("L_{from}_{to}")
}

fn movement_name(r: usize, c: usize, side: Side, turn: Turn) -> String {
    format!("M{r}_{c}_{}{}", side.letter(), turn_letter(turn))
}

/// Generates a grid network. Intersections are numbered row-major and the
/// first `num_unsignalized` of them are unsignalized; the remaining
/// `num_signalized` get a four-phase fixed-time plan. Routes join every
/// boundary entry to every boundary exit except the one it entered beside.
pub fn generate_grid(
    num_unsignalized: usize,
    num_signalized: usize,
    geometry: &GridGeometry,
) -> Result<Network, NetworkError> {
    let total = num_unsignalized + num_signalized;
    if total == 0 || geometry.rows * geometry.cols < total {
        return Err(NetworkError::GridTooSmall {
            rows: geometry.rows,
            cols: geometry.cols,
            requested: total,
        });
    }
    let layout = Layout {
        rows: geometry.rows,
        cols: geometry.cols,
        count: total,
    };
    let mut spec = NetworkSpec::default();
    // (entry lane, entry boundary label, side) and (exit lane, exit label)
    let mut entries: Vec<(String, String, Side)> = Vec::new();
    let mut exits: Vec<(String, String)> = Vec::new();

    for k in 0..total {
        let (r, c) = (k / geometry.cols, k % geometry.cols);
        let here = node(r, c);
        let signalized = k >= num_unsignalized;
        spec.intersections.push(IntersectionSpec {
            id: here.clone(),
            signalized,
            zone: format!("Z{r}_{c}"),
        });

        let mut incoming = Vec::new();
        let mut outgoing = Vec::new();
        for side in Side::ALL {
            let (other, length) = match layout.neighbor(r, c, side) {
                Some((nr, nc)) => (node(nr, nc), geometry.link_length),
                None => (boundary(r, c, side), geometry.boundary_length),
            };
            let in_lane = lane_name(&other, &here);
            let out_lane = lane_name(&here, &other);
            // Internal links are emitted once, from their downstream end.
            spec.lanes.push(LaneSpec {
                id: in_lane.clone(),
                length,
                speed_limit: geometry.speed_limit,
                downstream: Some(here.clone()),
            });
            if layout.neighbor(r, c, side).is_none() {
                spec.lanes.push(LaneSpec {
                    id: out_lane.clone(),
                    length,
                    speed_limit: geometry.speed_limit,
                    downstream: None,
                });
                entries.push((in_lane.clone(), other.clone(), side));
                exits.push((out_lane.clone(), other.clone()));
            }
            incoming.push(in_lane);
            outgoing.push(out_lane);
        }

        for side in Side::ALL {
            for turn in TURNS {
                let exit = side.exit_for(turn);
                spec.movements.push(MovementSpec {
                    id: movement_name(r, c, side, turn),
                    from: incoming[side as usize].clone(),
                    to: outgoing[exit as usize].clone(),
                    turn,
                });
            }
        }

        let mut adjacency: Vec<Vec<String>> = vec![Vec::new(); 12];
        let slot = |s: Side, t: Turn| s as usize * 3 + TURNS.iter().position(|&x| x == t).unwrap();
        for ((sa, ta), (sb, tb)) in four_way_conflicts() {
            adjacency[slot(sa, ta)].push(movement_name(r, c, sb, tb));
            adjacency[slot(sb, tb)].push(movement_name(r, c, sa, ta));
        }
        for side in Side::ALL {
            for turn in TURNS {
                spec.conflicts.push(ConflictSpec {
                    movement: movement_name(r, c, side, turn),
                    with: std::mem::take(&mut adjacency[slot(side, turn)]),
                });
            }
        }

        if signalized {
            let groups: [(&[Side], &[Turn]); 4] = [
                (&[Side::N, Side::S], &[Turn::Straight, Turn::Right]),
                (&[Side::N, Side::S], &[Turn::Left]),
                (&[Side::E, Side::W], &[Turn::Straight, Turn::Right]),
                (&[Side::E, Side::W], &[Turn::Left]),
            ];
            for (sides, turns) in groups {
                let movements = sides
                    .iter()
                    .flat_map(|&s| turns.iter().map(move |&t| movement_name(r, c, s, t)))
                    .collect();
                spec.phases.push(PhaseSpec {
                    intersection: here.clone(),
                    duration: geometry.phase_duration,
                    movements,
                });
                if geometry.all_red > 0.0 {
                    spec.phases.push(PhaseSpec {
                        intersection: here.clone(),
                        duration: geometry.all_red,
                        movements: Vec::new(),
                    });
                }
            }
        }
    }

    let bare = Network::from_spec(&spec)?;
    for (entry_lane, entry_label, side) in &entries {
        let from = bare.lane_by_name(entry_lane).expect("entry lane exists");
        for (exit_lane, exit_label) in &exits {
            if exit_label == entry_label {
                continue;
            }
            let to = bare.lane_by_name(exit_lane).expect("exit lane exists");
            let chain = shortest_route(&bare, from, to, |_| true)
                .expect("grid is strongly connected");
            spec.routes.push(RouteSpec {
                id: format!("R_{entry_label}_{exit_label}"),
                lanes: chain.iter().map(|l| bare.lane(*l).name.clone()).collect(),
                weight: if side.on_main_axis() {
                    geometry.main_axis_weight
                } else {
                    1.0
                },
            });
        }
    }
    Network::from_spec(&spec)
}
