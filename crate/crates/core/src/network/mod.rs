//! Road topology: intersections, lanes, movements, conflict relation, signal
//! plans and routes.
//!
//! A [`Network`] is only ever produced by [`Network::from_spec`], which checks
//! every structural invariant and normalizes element order (sorted by id), so
//! two networks describing the same topology compare equal regardless of the
//! order their elements were declared in.

mod format;
mod grid;
mod routing;
mod transform;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::NetworkError;

pub use format::{parse_network, serialize_network};
pub use grid::{generate_grid, GridGeometry, Side};
pub use routing::shortest_route;
pub use transform::remove_left_turns;

macro_rules! index_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

index_newtype!(
    /// Index of an intersection inside its [`Network`].
    IntersectionId
);
index_newtype!(
    /// Index of a lane inside its [`Network`].
    LaneId
);
index_newtype!(
    /// Index of a movement inside its [`Network`].
    MovementId
);
index_newtype!(
    /// Index of a route inside its [`Network`].
    RouteId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Turn {
    Left,
    Straight,
    Right,
}

impl Turn {
    pub fn as_str(self) -> &'static str {
        match self {
            Turn::Left => "left",
            Turn::Straight => "straight",
            Turn::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Turn> {
        match s {
            "left" => Some(Turn::Left),
            "straight" => Some(Turn::Straight),
            "right" => Some(Turn::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub duration: f64,
    /// Sorted, deduplicated.
    pub permitted: Vec<MovementId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPlan {
    pub cycle_length: f64,
    pub phases: Vec<Phase>,
}

impl SignalPlan {
    pub fn permits(&self, phase: usize, movement: MovementId) -> bool {
        self.phases[phase].permitted.binary_search(&movement).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Control {
    Signalized(SignalPlan),
    Unsignalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub name: String,
    pub control: Control,
    pub zone: String,
    /// Lanes whose downstream end is this intersection, sorted.
    pub incoming: Vec<LaneId>,
    /// Movements through this intersection, sorted.
    pub movements: Vec<MovementId>,
}

impl Intersection {
    pub fn is_signalized(&self) -> bool {
        matches!(self.control, Control::Signalized(_))
    }

    pub fn plan(&self) -> Option<&SignalPlan> {
        match &self.control {
            Control::Signalized(plan) => Some(plan),
            Control::Unsignalized => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub name: String,
    pub length: f64,
    pub speed_limit: f64,
    pub downstream: Option<IntersectionId>,
    /// Intersection feeding this lane, if any movement ends on it.
    pub upstream: Option<IntersectionId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Movement {
    pub name: String,
    pub from: LaneId,
    pub to: LaneId,
    pub turn: Turn,
    pub intersection: IntersectionId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub name: String,
    pub lanes: Vec<LaneId>,
    /// Relative origin-destination demand weight.
    pub weight: f64,
}

/// Immutable, validated road network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    intersections: Vec<Intersection>,
    lanes: Vec<Lane>,
    movements: Vec<Movement>,
    conflicts: Vec<Vec<MovementId>>,
    routes: Vec<Route>,
    outgoing: Vec<Vec<MovementId>>,
    lane_names: HashMap<String, LaneId>,
    movement_names: HashMap<String, MovementId>,
    intersection_names: HashMap<String, IntersectionId>,
}

// Raw, string-keyed description produced by the parser and the generators.

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkSpec {
    pub intersections: Vec<IntersectionSpec>,
    pub lanes: Vec<LaneSpec>,
    pub movements: Vec<MovementSpec>,
    pub conflicts: Vec<ConflictSpec>,
    pub phases: Vec<PhaseSpec>,
    pub routes: Vec<RouteSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionSpec {
    pub id: String,
    pub signalized: bool,
    pub zone: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSpec {
    pub id: String,
    pub length: f64,
    pub speed_limit: f64,
    pub downstream: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovementSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub turn: Turn,
}

/// Directed adjacency: `movement` conflicts with each of `with`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictSpec {
    pub movement: String,
    pub with: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub intersection: String,
    pub duration: f64,
    pub movements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    pub id: String,
    pub lanes: Vec<String>,
    pub weight: f64,
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

fn index_names<'a, I>(kind: &'static str, names: I) -> Result<HashMap<String, usize>, NetworkError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut map = HashMap::new();
    for (i, name) in names.into_iter().enumerate() {
        if !is_identifier(name) {
            return Err(NetworkError::Syntax {
                line: 0,
                column: 0,
                message: format!("`{name}` is not a valid {kind} identifier"),
            });
        }
        if map.insert(name.to_string(), i).is_some() {
            return Err(NetworkError::DuplicateId {
                kind,
                id: name.to_string(),
            });
        }
    }
    Ok(map)
}

fn resolve(
    map: &HashMap<String, usize>,
    owner: &str,
    kind: &'static str,
    id: &str,
) -> Result<usize, NetworkError> {
    map.get(id).copied().ok_or_else(|| NetworkError::UnknownReference {
        owner: owner.to_string(),
        kind,
        id: id.to_string(),
    })
}

impl Network {
    /// Validates a raw description and builds the normalized network.
    pub fn from_spec(spec: &NetworkSpec) -> Result<Network, NetworkError> {
        let mut inters: Vec<&IntersectionSpec> = spec.intersections.iter().collect();
        inters.sort_by(|a, b| a.id.cmp(&b.id));
        let mut lanes: Vec<&LaneSpec> = spec.lanes.iter().collect();
        lanes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut movs: Vec<&MovementSpec> = spec.movements.iter().collect();
        movs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut routes: Vec<&RouteSpec> = spec.routes.iter().collect();
        routes.sort_by(|a, b| a.id.cmp(&b.id));

        let inter_map = index_names("intersection", inters.iter().map(|i| i.id.as_str()))?;
        let lane_map = index_names("lane", lanes.iter().map(|l| l.id.as_str()))?;
        let mov_map = index_names("movement", movs.iter().map(|m| m.id.as_str()))?;
        index_names("route", routes.iter().map(|r| r.id.as_str()))?;

        let mut out_lanes = Vec::with_capacity(lanes.len());
        for l in &lanes {
            if !(l.length > 0.0 && l.length.is_finite()) {
                return Err(NetworkError::InvalidLane {
                    lane: l.id.clone(),
                    message: format!("length must be > 0, got {}", l.length),
                });
            }
            if !(l.speed_limit > 0.0 && l.speed_limit.is_finite()) {
                return Err(NetworkError::InvalidLane {
                    lane: l.id.clone(),
                    message: format!("speed_limit must be > 0, got {}", l.speed_limit),
                });
            }
            let downstream = match &l.downstream {
                Some(d) => Some(IntersectionId(resolve(&inter_map, &l.id, "intersection", d)?)),
                None => None,
            };
            out_lanes.push(Lane {
                name: l.id.clone(),
                length: l.length,
                speed_limit: l.speed_limit,
                downstream,
                upstream: None,
            });
        }

        let mut out_movs = Vec::with_capacity(movs.len());
        for m in &movs {
            let from = LaneId(resolve(&lane_map, &m.id, "lane", &m.from)?);
            let to = LaneId(resolve(&lane_map, &m.id, "lane", &m.to)?);
            if from == to {
                return Err(NetworkError::InvalidMovement {
                    movement: m.id.clone(),
                    message: "from_lane and to_lane are the same".into(),
                });
            }
            let Some(inter) = out_lanes[from.0].downstream else {
                return Err(NetworkError::InvalidMovement {
                    movement: m.id.clone(),
                    message: format!("lane `{}` does not end at an intersection", m.from),
                });
            };
            match out_lanes[to.0].upstream {
                Some(u) if u != inter => {
                    return Err(NetworkError::InvalidMovement {
                        movement: m.id.clone(),
                        message: format!(
                            "lane `{}` is fed by two different intersections",
                            m.to
                        ),
                    })
                }
                _ => out_lanes[to.0].upstream = Some(inter),
            }
            out_movs.push(Movement {
                name: m.id.clone(),
                from,
                to,
                turn: m.turn,
                intersection: inter,
            });
        }

        // Conflict relation: directed adjacency lists must be symmetric.
        let mut directed: BTreeSet<(usize, usize)> = BTreeSet::new();
        for c in &spec.conflicts {
            let a = resolve(&mov_map, "conflict", "movement", &c.movement)?;
            for w in &c.with {
                let b = resolve(&mov_map, &c.movement, "movement", w)?;
                if a == b {
                    return Err(NetworkError::ReflexiveConflict {
                        movement: c.movement.clone(),
                    });
                }
                if out_movs[a].intersection != out_movs[b].intersection {
                    return Err(NetworkError::CrossIntersectionConflict {
                        a: c.movement.clone(),
                        b: w.clone(),
                    });
                }
                directed.insert((a, b));
            }
        }
        let mut conflicts = vec![Vec::new(); out_movs.len()];
        for &(a, b) in &directed {
            if !directed.contains(&(b, a)) {
                return Err(NetworkError::AsymmetricConflict {
                    a: out_movs[a].name.clone(),
                    b: out_movs[b].name.clone(),
                });
            }
            conflicts[a].push(MovementId(b));
        }

        let mut inter_movs = vec![Vec::new(); inters.len()];
        for (i, m) in out_movs.iter().enumerate() {
            inter_movs[m.intersection.0].push(MovementId(i));
        }
        let mut incoming = vec![Vec::new(); inters.len()];
        for (i, l) in out_lanes.iter().enumerate() {
            if let Some(d) = l.downstream {
                incoming[d.0].push(LaneId(i));
            }
        }

        // Signal plans.
        let mut phases: Vec<Vec<Phase>> = vec![Vec::new(); inters.len()];
        for p in &spec.phases {
            let owner = format!("phase of `{}`", p.intersection);
            let ii = resolve(&inter_map, &owner, "intersection", &p.intersection)?;
            if !(p.duration > 0.0 && p.duration.is_finite()) {
                return Err(NetworkError::InvalidSignalPlan {
                    intersection: p.intersection.clone(),
                    message: format!("phase duration must be > 0, got {}", p.duration),
                });
            }
            let mut permitted = Vec::with_capacity(p.movements.len());
            for m in &p.movements {
                let mi = MovementId(resolve(&mov_map, &owner, "movement", m)?);
                if out_movs[mi.0].intersection.0 != ii {
                    return Err(NetworkError::InvalidSignalPlan {
                        intersection: p.intersection.clone(),
                        message: format!("movement `{m}` belongs to another intersection"),
                    });
                }
                permitted.push(mi);
            }
            permitted.sort();
            permitted.dedup();
            phases[ii].push(Phase {
                duration: p.duration,
                permitted,
            });
        }

        let mut out_inters = Vec::with_capacity(inters.len());
        for (ii, spec_i) in inters.iter().enumerate() {
            if !is_identifier(&spec_i.zone) {
                return Err(NetworkError::Syntax {
                    line: 0,
                    column: 0,
                    message: format!("`{}` is not a valid zone identifier", spec_i.zone),
                });
            }
            let plan_phases = std::mem::take(&mut phases[ii]);
            let control = if spec_i.signalized {
                if plan_phases.is_empty() {
                    return Err(NetworkError::InvalidSignalPlan {
                        intersection: spec_i.id.clone(),
                        message: "signalized intersection has no phases".into(),
                    });
                }
                for (pi, phase) in plan_phases.iter().enumerate() {
                    for (k, &a) in phase.permitted.iter().enumerate() {
                        for &b in &phase.permitted[k + 1..] {
                            if conflicts[a.0].binary_search(&b).is_ok() {
                                return Err(NetworkError::PhaseConflict {
                                    intersection: spec_i.id.clone(),
                                    phase: pi,
                                    a: out_movs[a.0].name.clone(),
                                    b: out_movs[b.0].name.clone(),
                                });
                            }
                        }
                    }
                }
                for &m in &inter_movs[ii] {
                    if !plan_phases.iter().any(|p| p.permitted.binary_search(&m).is_ok()) {
                        return Err(NetworkError::InvalidSignalPlan {
                            intersection: spec_i.id.clone(),
                            message: format!(
                                "movement `{}` is never permitted",
                                out_movs[m.0].name
                            ),
                        });
                    }
                }
                let cycle_length = plan_phases.iter().map(|p| p.duration).sum();
                Control::Signalized(SignalPlan {
                    cycle_length,
                    phases: plan_phases,
                })
            } else {
                if !plan_phases.is_empty() {
                    return Err(NetworkError::InvalidSignalPlan {
                        intersection: spec_i.id.clone(),
                        message: "unsignalized intersection declares phases".into(),
                    });
                }
                Control::Unsignalized
            };
            out_inters.push(Intersection {
                name: spec_i.id.clone(),
                control,
                zone: spec_i.zone.clone(),
                incoming: std::mem::take(&mut incoming[ii]),
                movements: std::mem::take(&mut inter_movs[ii]),
            });
        }

        let mut outgoing = vec![Vec::new(); out_lanes.len()];
        for (i, m) in out_movs.iter().enumerate() {
            outgoing[m.from.0].push(MovementId(i));
        }

        let mut out_routes = Vec::with_capacity(routes.len());
        for r in &routes {
            if r.lanes.is_empty() {
                return Err(NetworkError::InvalidRoute {
                    route: r.id.clone(),
                    message: "empty lane chain".into(),
                });
            }
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(NetworkError::InvalidRoute {
                    route: r.id.clone(),
                    message: format!("weight must be > 0, got {}", r.weight),
                });
            }
            let chain = r
                .lanes
                .iter()
                .map(|l| resolve(&lane_map, &r.id, "lane", l).map(LaneId))
                .collect::<Result<Vec<_>, _>>()?;
            for pair in chain.windows(2) {
                let joins = outgoing[pair[0].0]
                    .iter()
                    .filter(|m| out_movs[m.0].to == pair[1])
                    .count();
                if joins != 1 {
                    return Err(NetworkError::InvalidRoute {
                        route: r.id.clone(),
                        message: format!(
                            "lanes `{}` -> `{}` are joined by {joins} movements, expected exactly 1",
                            out_lanes[pair[0].0].name, out_lanes[pair[1].0].name
                        ),
                    });
                }
            }
            out_routes.push(Route {
                name: r.id.clone(),
                lanes: chain,
                weight: r.weight,
            });
        }

        Ok(Network {
            intersections: out_inters,
            lanes: out_lanes,
            movements: out_movs,
            conflicts,
            routes: out_routes,
            outgoing,
            lane_names: lane_map.into_iter().map(|(k, v)| (k, LaneId(v))).collect(),
            movement_names: mov_map.into_iter().map(|(k, v)| (k, MovementId(v))).collect(),
            intersection_names: inter_map
                .into_iter()
                .map(|(k, v)| (k, IntersectionId(v)))
                .collect(),
        })
    }

    /// Raw description in normalized order; `from_spec(to_spec())` is the identity.
    pub fn to_spec(&self) -> NetworkSpec {
        let mut spec = NetworkSpec::default();
        for i in &self.intersections {
            spec.intersections.push(IntersectionSpec {
                id: i.name.clone(),
                signalized: i.is_signalized(),
                zone: i.zone.clone(),
            });
            if let Some(plan) = i.plan() {
                for p in &plan.phases {
                    spec.phases.push(PhaseSpec {
                        intersection: i.name.clone(),
                        duration: p.duration,
                        movements: p
                            .permitted
                            .iter()
                            .map(|m| self.movements[m.0].name.clone())
                            .collect(),
                    });
                }
            }
        }
        for l in &self.lanes {
            spec.lanes.push(LaneSpec {
                id: l.name.clone(),
                length: l.length,
                speed_limit: l.speed_limit,
                downstream: l.downstream.map(|d| self.intersections[d.0].name.clone()),
            });
        }
        for (i, m) in self.movements.iter().enumerate() {
            spec.movements.push(MovementSpec {
                id: m.name.clone(),
                from: self.lanes[m.from.0].name.clone(),
                to: self.lanes[m.to.0].name.clone(),
                turn: m.turn,
            });
            if !self.conflicts[i].is_empty() {
                spec.conflicts.push(ConflictSpec {
                    movement: m.name.clone(),
                    with: self.conflicts[i]
                        .iter()
                        .map(|c| self.movements[c.0].name.clone())
                        .collect(),
                });
            }
        }
        for r in &self.routes {
            spec.routes.push(RouteSpec {
                id: r.name.clone(),
                lanes: r.lanes.iter().map(|l| self.lanes[l.0].name.clone()).collect(),
                weight: r.weight,
            });
        }
        spec
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn movements(&self) -> &[Movement] {
        &self.movements
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0]
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.0]
    }

    pub fn movement(&self, id: MovementId) -> &Movement {
        &self.movements[id.0]
    }

    pub fn route(&self, id: RouteId) -> &Route {
        &self.routes[id.0]
    }

    /// Movements conflicting with `m`, sorted.
    pub fn conflicts_of(&self, m: MovementId) -> &[MovementId] {
        &self.conflicts[m.0]
    }

    pub fn in_conflict(&self, a: MovementId, b: MovementId) -> bool {
        self.conflicts[a.0].binary_search(&b).is_ok()
    }

    /// Every unordered conflict pair `(a, b)` with `a < b`.
    pub fn conflict_pairs(&self) -> impl Iterator<Item = (MovementId, MovementId)> + '_ {
        self.conflicts.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .filter(move |b| b.0 > a)
                .map(move |&b| (MovementId(a), b))
        })
    }

    /// Movements leaving lane `l`.
    pub fn outgoing(&self, l: LaneId) -> &[MovementId] {
        &self.outgoing[l.0]
    }

    pub fn movement_between(&self, from: LaneId, to: LaneId) -> Option<MovementId> {
        self.outgoing[from.0]
            .iter()
            .copied()
            .find(|m| self.movements[m.0].to == to)
    }

    pub fn lane_by_name(&self, name: &str) -> Option<LaneId> {
        self.lane_names.get(name).copied()
    }

    pub fn movement_by_name(&self, name: &str) -> Option<MovementId> {
        self.movement_names.get(name).copied()
    }

    pub fn intersection_by_name(&self, name: &str) -> Option<IntersectionId> {
        self.intersection_names.get(name).copied()
    }

    /// Largest incoming-lane count over all intersections.
    pub fn max_incoming(&self) -> usize {
        self.intersections
            .iter()
            .map(|i| i.incoming.len())
            .max()
            .unwrap_or(0)
    }

    pub fn count_turns(&self, turn: Turn) -> usize {
        self.movements.iter().filter(|m| m.turn == turn).count()
    }

    /// Re-checks the route-connectivity invariant by direct lookup.
    pub fn route_is_connected(&self, r: &Route) -> bool {
        !r.lanes.is_empty()
            && r.lanes.windows(2).all(|p| {
                self.outgoing[p[0].0]
                    .iter()
                    .filter(|m| self.movements[m.0].to == p[1])
                    .count()
                    == 1
            })
    }
}
