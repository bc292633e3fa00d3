//! Deterministic discrete-time world stepping.
//!
//! Each vehicle follows a precomputed path that alternates lane segments and
//! junction segments (one per movement). Positions are front-bumper distances
//! from the start of the current segment. A vehicle occupies an intersection's
//! conflict zone from the moment its front passes the stop line until its rear
//! clears the exit line.

mod demand;
mod events;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use demand::{plan_arrivals, Arrival, DemandSchedule};
pub use events::{CollisionEvent, CollisionKind, Event, EventLog, EventType, RolloutSummary};

use crate::agent::{build_observation, compute_reward, Action, Observation, RewardWeights, STOP_SPEED};
use crate::error::EngineError;
use crate::idm::{idm_acceleration, integrate, IdmParams, EMERGENCY_DECEL, NO_LEADER_GAP};
use crate::learner::Transition;
use crate::network::{Control, IntersectionId, LaneId, MovementId, Network, RouteId, Turn};
use crate::policy::Policy;
use crate::signal::movement_permitted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VehicleKind {
    Hv,
    Rv,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Hv => "HV",
            VehicleKind::Rv => "RV",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Lane(LaneId),
    Junction(MovementId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSegment {
    pub segment: Segment,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub dt: f64,
    pub decision_interval: f64,
    /// Distance upstream of an unsignalized stop line inside which RVs follow the policy.
    pub control_zone: f64,
    pub vehicle_length: f64,
    pub collision_dwell: f64,
    /// Gap-acceptance threshold for HVs at unsignalized intersections, s.
    pub critical_tta: f64,
    /// Distance from the stop line at which a vehicle may claim its movement.
    pub commit_distance: f64,
    pub lookahead: f64,
    pub hv_idm: IdmParams,
    pub rv_idm: IdmParams,
    pub reward: RewardWeights,
    /// Cap on the delay entering the flow reward, s.
    pub delay_cap: f64,
    pub straight_length: f64,
    pub left_length: f64,
    pub right_length: f64,
    pub record_decisions: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            dt: 0.1,
            decision_interval: 1.0,
            control_zone: 30.0,
            vehicle_length: 5.0,
            collision_dwell: 5.0,
            critical_tta: 4.0,
            commit_distance: 30.0,
            lookahead: 250.0,
            hv_idm: IdmParams::default(),
            rv_idm: IdmParams::default(),
            reward: RewardWeights::default(),
            delay_cap: 50.0,
            straight_length: 15.0,
            left_length: 18.75,
            right_length: 7.5,
            record_decisions: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("dt", self.dt),
            ("decision_interval", self.decision_interval),
            ("control_zone", self.control_zone),
            ("vehicle_length", self.vehicle_length),
            ("collision_dwell", self.collision_dwell),
            ("critical_tta", self.critical_tta),
            ("commit_distance", self.commit_distance),
            ("lookahead", self.lookahead),
            ("delay_cap", self.delay_cap),
            ("straight_length", self.straight_length),
            ("left_length", self.left_length),
            ("right_length", self.right_length),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{k} must be > 0, got {v}"));
            }
        }
        self.hv_idm.validate().map_err(|e| format!("hv idm: {e}"))?;
        self.rv_idm.validate().map_err(|e| format!("rv idm: {e}"))?;
        self.reward.validate()?;
        Ok(())
    }

    pub fn junction_length(&self, turn: Turn) -> f64 {
        match turn {
            Turn::Straight => self.straight_length,
            Turn::Left => self.left_length,
            Turn::Right => self.right_length,
        }
    }

    fn decision_ticks(&self) -> u64 {
        ((self.decision_interval / self.dt).round() as u64).max(1)
    }

    /// Support half-width the learner needs to cover every reward.
    pub fn reward_bound(&self) -> f64 {
        self.reward.alpha * self.delay_cap + self.reward.beta_penalty
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: u64,
    pub kind: VehicleKind,
    pub route: RouteId,
    /// Index into the route's path.
    pub segment: usize,
    /// Current lane, or the approach lane while crossing a junction.
    pub lane: LaneId,
    pub position: f64,
    pub speed: f64,
    pub idm: IdmParams,
    /// RV currently under the learned policy.
    pub controlled: bool,
    pub action: Action,
    /// Seconds spent below the stop threshold since entering the current lane.
    pub waiting: f64,
    /// Movement this vehicle has claimed but not yet entered.
    pub committed: Option<MovementId>,
    /// Movement whose conflict zone this vehicle currently occupies.
    pub zone: Option<MovementId>,
    pub collided_at: Option<f64>,
    pub spawn_time: f64,
    next_decision: Option<u64>,
}

impl VehicleState {
    pub fn is_frozen(&self) -> bool {
        self.collided_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneStats {
    pub queue: usize,
    pub mean_delay: f64,
    pub occupied: bool,
}

/// Dynamic state of one rollout.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub tick: u64,
    pub dt: f64,
    vehicles: Vec<VehicleState>,
    pub spawned: u64,
    pub departed: u64,
    pub collision_removed: u64,
    pub rv_spawned: u64,
    pub decisions: u64,
    collided: BTreeSet<u64>,
    collision_events: u64,
    crossing_events: u64,
    next_id: u64,
}

impl WorldState {
    pub fn clock(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    /// Active vehicles in ascending id order.
    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: u64) -> Option<&VehicleState> {
        self.index_of(id).map(|i| &self.vehicles[i])
    }

    fn index_of(&self, id: u64) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok()
    }

    pub fn active(&self) -> u64 {
        self.vehicles.len() as u64
    }

    pub fn collided(&self) -> &BTreeSet<u64> {
        &self.collided
    }

    /// `(vehicle, movement)` pairs inside the conflict zone of `ix`.
    pub fn occupancy(&self, net: &Network, ix: IntersectionId) -> Vec<(u64, MovementId)> {
        self.vehicles
            .iter()
            .filter_map(|v| v.zone.map(|m| (v.id, m)))
            .filter(|(_, m)| net.movement(*m).intersection == ix)
            .collect()
    }
}

#[derive(Clone)]
struct Pending {
    obs: Vec<f64>,
    action: Action,
    reward: f64,
}

/// Vehicles per segment, sorted by position ascending.
#[derive(Clone, Default)]
struct SpatialIndex {
    lanes: Vec<Vec<usize>>,
    junctions: Vec<Vec<usize>>,
}

#[derive(Clone)]
pub struct Simulation<'n> {
    net: &'n Network,
    cfg: EngineConfig,
    paths: Vec<Vec<PathSegment>>,
    junction_len: Vec<f64>,
    /// Movements sharing the exit lane of each movement but arriving from elsewhere.
    merges: Vec<Vec<MovementId>>,
    world: WorldState,
    arrivals: Vec<Arrival>,
    next_arrival: usize,
    queues: BTreeMap<LaneId, VecDeque<Arrival>>,
    log: EventLog,
    index: SpatialIndex,
    contacts: BTreeSet<(u64, u64)>,
    pending: BTreeMap<u64, Pending>,
    transitions: Vec<Transition>,
    record_transitions: bool,
    decision_rng: ChaCha8Rng,
    obs_len: usize,
}

impl<'n> Simulation<'n> {
    /// Builds a rollout. Demand is drawn from stream 0 of `seed`, policy
    /// randomness from stream 1, so changing the policy never changes demand.
    pub fn new(
        net: &'n Network,
        cfg: EngineConfig,
        schedule: &DemandSchedule,
        seed: u64,
    ) -> Result<Simulation<'n>, EngineError> {
        schedule.validate()?;
        let mut demand_rng = ChaCha8Rng::seed_from_u64(seed);
        demand_rng.set_stream(0);
        let arrivals = plan_arrivals(schedule, net, &mut demand_rng);
        let mut sim = Simulation::empty(net, cfg, seed)?;
        sim.arrivals = arrivals;
        Ok(sim)
    }

    /// A world with no scheduled demand; vehicles can be placed by hand.
    pub fn empty(net: &'n Network, cfg: EngineConfig, seed: u64) -> Result<Simulation<'n>, EngineError> {
        cfg.validate().map_err(EngineError::InvalidDemand)?;
        let junction_len: Vec<f64> = net
            .movements()
            .iter()
            .map(|m| cfg.junction_length(m.turn))
            .collect();
        let paths = net
            .routes()
            .iter()
            .map(|r| {
                let mut p = Vec::with_capacity(2 * r.lanes.len());
                for (i, &l) in r.lanes.iter().enumerate() {
                    if i > 0 {
                        let m = net
                            .movement_between(r.lanes[i - 1], l)
                            .expect("routes are connected");
                        p.push(PathSegment {
                            segment: Segment::Junction(m),
                            length: junction_len[m.index()],
                        });
                    }
                    p.push(PathSegment {
                        segment: Segment::Lane(l),
                        length: net.lane(l).length,
                    });
                }
                p
            })
            .collect();
        let merges = net
            .movements()
            .iter()
            .map(|m| {
                net.movements()
                    .iter()
                    .enumerate()
                    .filter(|(_, o)| o.to == m.to && o.from != m.from)
                    .map(|(i, _)| MovementId(i))
                    .collect()
            })
            .collect();
        let mut decision_rng = ChaCha8Rng::seed_from_u64(seed);
        decision_rng.set_stream(1);
        let record = cfg.record_decisions;
        Ok(Simulation {
            net,
            paths,
            junction_len,
            merges,
            world: WorldState {
                tick: 0,
                dt: cfg.dt,
                vehicles: Vec::new(),
                spawned: 0,
                departed: 0,
                collision_removed: 0,
                rv_spawned: 0,
                decisions: 0,
                collided: BTreeSet::new(),
                collision_events: 0,
                crossing_events: 0,
                next_id: 0,
            },
            cfg,
            arrivals: Vec::new(),
            next_arrival: 0,
            queues: BTreeMap::new(),
            log: EventLog::new(record),
            index: SpatialIndex::default(),
            contacts: BTreeSet::new(),
            pending: BTreeMap::new(),
            transitions: Vec::new(),
            record_transitions: false,
            decision_rng,
            obs_len: crate::agent::observation_len(net),
        })
    }

    pub fn network(&self) -> &'n Network {
        self.net
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn path(&self, route: RouteId) -> &[PathSegment] {
        &self.paths[route.index()]
    }

    pub fn set_record_transitions(&mut self, on: bool) {
        self.record_transitions = on;
    }

    /// Completed RV transitions since the last drain.
    pub fn drain_transitions(&mut self) -> Vec<Transition> {
        std::mem::take(&mut self.transitions)
    }

    pub fn queued(&self) -> u64 {
        let waiting: usize = self.queues.values().map(|q| q.len()).sum();
        (waiting + self.arrivals.len() - self.next_arrival) as u64
    }

    pub fn summary(&self, seed: u64) -> RolloutSummary {
        let w = &self.world;
        RolloutSummary {
            seed,
            duration: w.clock(),
            spawned: w.spawned,
            departed: w.departed,
            collided: w.collided.len() as u64,
            collision_events: w.collision_events,
            crossing_events: w.crossing_events,
            rear_end_events: w.collision_events - w.crossing_events,
            collision_removed: w.collision_removed,
            active: w.active(),
            queued: self.queued(),
            rv_spawned: w.rv_spawned,
            decisions: w.decisions,
        }
    }

    /// Places a vehicle by hand at `position` on path segment `segment` of `route`.
    pub fn insert_vehicle(
        &mut self,
        kind: VehicleKind,
        route: RouteId,
        segment: usize,
        position: f64,
        speed: f64,
    ) -> u64 {
        let id = self.world.next_id;
        self.world.next_id += 1;
        let path = &self.paths[route.index()];
        let lane = (0..=segment)
            .rev()
            .find_map(|k| match path[k].segment {
                Segment::Lane(l) => Some(l),
                Segment::Junction(_) => None,
            })
            .expect("paths start with a lane");
        let idm = match kind {
            VehicleKind::Hv => self.cfg.hv_idm,
            VehicleKind::Rv => self.cfg.rv_idm,
        };
        let mut v = VehicleState {
            id,
            kind,
            route,
            segment,
            lane,
            position,
            speed,
            idm,
            controlled: false,
            action: Action::Go,
            waiting: 0.0,
            committed: None,
            zone: None,
            collided_at: None,
            spawn_time: self.world.clock(),
            next_decision: None,
        };
        v.zone = self.zone_of(&v);
        self.world.vehicles.push(v);
        self.world.spawned += 1;
        if kind == VehicleKind::Rv {
            self.world.rv_spawned += 1;
        }
        self.log.push(Event {
            time: self.world.clock(),
            kind: EventType::Spawn,
            vehicles: vec![id],
            location: self.net.lane(lane).name.clone(),
            extra: format!("{};{}", kind.as_str(), self.net.route(route).name),
        });
        id
    }

    /// Sets the action of a controlled RV; it persists until the next decision.
    pub fn apply_action(&mut self, rv: u64, action: Action) -> Result<(), EngineError> {
        let i = self.world.index_of(rv).ok_or(EngineError::UnknownVehicle(rv))?;
        let v = &mut self.world.vehicles[i];
        if v.kind != VehicleKind::Rv || !v.controlled {
            return Err(EngineError::NotInControlZone(rv));
        }
        v.action = action;
        Ok(())
    }

    /// Queue, mean delay and conflict-zone occupancy for lane `l`.
    pub fn lane_stats(&self, l: LaneId) -> LaneStats {
        let mut stats = LaneStats::default();
        let mut n = 0usize;
        let mut total = 0.0;
        for v in &self.world.vehicles {
            if let Some(m) = v.zone {
                if self.net.movement(m).from == l {
                    stats.occupied = true;
                }
            }
            if self.segment_of(v) == Segment::Lane(l) {
                n += 1;
                total += v.waiting;
                if v.speed < STOP_SPEED {
                    stats.queue += 1;
                }
            }
        }
        if n > 0 {
            stats.mean_delay = total / n as f64;
        }
        stats
    }

    fn segment_of(&self, v: &VehicleState) -> Segment {
        self.paths[v.route.index()][v.segment].segment
    }

    fn zone_of(&self, v: &VehicleState) -> Option<MovementId> {
        let path = &self.paths[v.route.index()];
        match path[v.segment].segment {
            Segment::Junction(m) => Some(m),
            Segment::Lane(_) if v.segment > 0 && v.position < self.cfg.vehicle_length => {
                match path[v.segment - 1].segment {
                    Segment::Junction(m) => Some(m),
                    Segment::Lane(_) => None,
                }
            }
            Segment::Lane(_) => None,
        }
    }

    /// Next junction on the path when the vehicle is on an approach lane:
    /// `(movement, distance to stop line)`.
    fn approach(&self, v: &VehicleState) -> Option<(MovementId, f64)> {
        let path = &self.paths[v.route.index()];
        match (path[v.segment].segment, path.get(v.segment + 1)) {
            (Segment::Lane(_), Some(next)) => match next.segment {
                Segment::Junction(m) => Some((m, path[v.segment].length - v.position)),
                Segment::Lane(_) => None,
            },
            _ => None,
        }
    }

    fn is_unsignalized(&self, m: MovementId) -> bool {
        matches!(
            self.net.intersection(self.net.movement(m).intersection).control,
            Control::Unsignalized
        )
    }

    fn in_control_zone(&self, v: &VehicleState) -> bool {
        if v.kind != VehicleKind::Rv || v.is_frozen() {
            return false;
        }
        match self.approach(v) {
            Some((m, d)) => self.is_unsignalized(m) && d <= self.cfg.control_zone,
            None => false,
        }
    }

    fn rebuild_index(&mut self) {
        let idx = &mut self.index;
        idx.lanes.resize(self.net.lanes().len(), Vec::new());
        idx.junctions.resize(self.net.movements().len(), Vec::new());
        idx.lanes.iter_mut().for_each(Vec::clear);
        idx.junctions.iter_mut().for_each(Vec::clear);
        for (i, v) in self.world.vehicles.iter().enumerate() {
            match self.paths[v.route.index()][v.segment].segment {
                Segment::Lane(l) => idx.lanes[l.index()].push(i),
                Segment::Junction(m) => idx.junctions[m.index()].push(i),
            }
        }
        let vs = &self.world.vehicles;
        let by_pos = |a: &usize, b: &usize| {
            vs[*a]
                .position
                .total_cmp(&vs[*b].position)
                .then(vs[*b].id.cmp(&vs[*a].id))
        };
        idx.lanes.iter_mut().for_each(|l| l.sort_by(by_pos));
        idx.junctions.iter_mut().for_each(|l| l.sort_by(by_pos));
    }

    /// `(bumper gap, leader speed, leader index)` of the nearest vehicle ahead
    /// along the path of vehicle `vi`, within the lookahead.
    fn leader(&self, vi: usize) -> Option<(f64, f64, usize)> {
        let vs = &self.world.vehicles;
        let me = &vs[vi];
        let path = &self.paths[me.route.index()];
        let len = self.cfg.vehicle_length;
        let ahead_on_same = |j: usize| {
            let o = &vs[j];
            o.position > me.position || (o.position == me.position && o.id < me.id)
        };
        let mut base = -me.position;
        for k in me.segment..path.len() {
            if base > self.cfg.lookahead {
                break;
            }
            let mut best: Option<(f64, usize)> = None;
            let mut offer = |d: f64, j: usize| {
                if best.is_none_or(|(bd, bj)| d < bd || (d == bd && vs[j].id < vs[bj].id)) {
                    best = Some((d, j));
                }
            };
            match path[k].segment {
                Segment::Lane(l) => {
                    let list = &self.index.lanes[l.index()];
                    if let Some(&j) = list
                        .iter()
                        .find(|&&j| j != vi && (k != me.segment || ahead_on_same(j)))
                    {
                        offer(base + vs[j].position, j);
                    }
                }
                Segment::Junction(m) => {
                    let mv = self.net.movement(m);
                    for &m2 in self.net.outgoing(mv.from) {
                        if k == me.segment && m2 != m {
                            continue;
                        }
                        for &j in &self.index.junctions[m2.index()] {
                            if j == vi || (k == me.segment && !ahead_on_same(j)) {
                                continue;
                            }
                            if m2 != m && vs[j].position > 2.0 * len {
                                continue;
                            }
                            offer(base + vs[j].position, j);
                            break;
                        }
                    }
                    // Merging traffic only leads once this vehicle is in the junction itself.
                    let my_len = self.junction_len[m.index()];
                    let merging = if k == me.segment { &self.merges[m.index()][..] } else { &[] };
                    for &m3 in merging {
                        let their_len = self.junction_len[m3.index()];
                        for &j in &self.index.junctions[m3.index()] {
                            let d = base + my_len - (their_len - vs[j].position);
                            if d > 0.0 || (d == 0.0 && vs[j].id < me.id) {
                                offer(d, j);
                            }
                        }
                    }
                }
            }
            if let Some((d, j)) = best {
                return Some((d - len, vs[j].speed, j));
            }
            base += path[k].length;
        }
        None
    }

    fn head_of_lane(&self, l: LaneId) -> Option<usize> {
        self.index.lanes[l.index()].last().copied()
    }

    /// Movements that must be clear before `m` is claimed: its conflicts and
    /// the movements merging into the same exit lane.
    fn blocks(&self, m: MovementId, other: MovementId) -> bool {
        self.net.in_conflict(m, other) || self.merges[m.index()].contains(&other)
    }

    fn zone_clear_for(&self, m: MovementId, except: usize) -> bool {
        self.world.vehicles.iter().enumerate().all(|(i, v)| {
            i == except
                || !(v.zone.is_some_and(|z| self.blocks(m, z))
                    || v.committed.is_some_and(|c| self.blocks(m, c)))
        })
    }

    /// Whether vehicle `vi` may claim movement `m` now.
    fn may_commit(&self, vi: usize, m: MovementId, d: f64) -> bool {
        let v = &self.world.vehicles[vi];
        if d > self.cfg.commit_distance || self.head_of_lane(v.lane) != Some(vi) {
            return false;
        }
        let stopping = v.speed * v.speed / (2.0 * EMERGENCY_DECEL) + v.speed * self.cfg.dt;
        if d < stopping {
            return true;
        }
        if !self.zone_clear_for(m, vi) {
            return false;
        }
        let t = self.world.clock();
        if !self.is_unsignalized(m) {
            return movement_permitted(self.net, m, t).unwrap_or(false);
        }
        let ix = self.net.intersection(self.net.movement(m).intersection);
        for &l2 in &ix.incoming {
            if l2 == v.lane {
                continue;
            }
            let Some(h) = self.head_of_lane(l2) else { continue };
            let other = &self.world.vehicles[h];
            if other.committed.is_some() || other.speed < STOP_SPEED {
                continue;
            }
            let Some((m2, d2)) = self.approach(other) else { continue };
            if self.blocks(m, m2) && d2 / other.speed < self.cfg.critical_tta {
                return false;
            }
        }
        true
    }

    fn record_transition(&mut self, t: Transition) {
        if self.record_transitions {
            self.transitions.push(t);
        }
    }

    fn close_pending(&mut self, id: u64, next: Option<Vec<f64>>, collided: bool) {
        let Some(p) = self.pending.remove(&id) else { return };
        let reward = if collided {
            p.reward - self.cfg.reward.beta_penalty
        } else {
            p.reward
        };
        let terminal = next.is_none();
        let next_obs = next.unwrap_or_else(|| vec![0.0; self.obs_len]);
        self.record_transition(Transition {
            obs: p.obs,
            action: p.action,
            reward,
            next_obs,
            terminal,
            priority: 0.0,
        });
    }

    fn spawn_step(&mut self) {
        let t = self.world.clock();
        while self.next_arrival < self.arrivals.len() && self.arrivals[self.next_arrival].time <= t {
            let a = self.arrivals[self.next_arrival].clone();
            let origin = self.net.route(a.route).lanes[0];
            self.queues.entry(origin).or_default().push_back(a);
            self.next_arrival += 1;
        }
        if self.queues.values().all(VecDeque::is_empty) {
            return;
        }
        self.rebuild_index();
        let len = self.cfg.vehicle_length;
        let origins: Vec<LaneId> = self.queues.keys().copied().collect();
        for origin in origins {
            if self.queues[&origin].is_empty() {
                continue;
            }
            let last = self.index.lanes[origin.index()].first().copied();
            let speed = match last {
                None => self.net.lane(origin).speed_limit,
                Some(j) => {
                    let o = &self.world.vehicles[j];
                    let gap = o.position - len - len;
                    if gap < self.cfg.hv_idm.min_gap {
                        continue;
                    }
                    let free = self.cfg.hv_idm.desired_gap(self.cfg.hv_idm.desired_speed, 0.0);
                    if gap < free {
                        o.speed.min(self.net.lane(origin).speed_limit)
                    } else {
                        self.net.lane(origin).speed_limit
                    }
                }
            };
            let a = self.queues.get_mut(&origin).unwrap().pop_front().unwrap();
            let idm = match a.kind {
                VehicleKind::Hv => self.cfg.hv_idm,
                VehicleKind::Rv => self.cfg.rv_idm,
            };
            let id = self.insert_vehicle(a.kind, a.route, 0, len, speed.min(idm.desired_speed));
            // The new vehicle sits at the lane start; keep the index consistent
            // for the next origin.
            let vi = self.world.vehicles.len() - 1;
            debug_assert_eq!(self.world.vehicles[vi].id, id);
            self.index.lanes[origin.index()].insert(0, vi);
        }
    }

    /// Advances the world by one time step.
    pub fn step(&mut self, policy: &mut dyn Policy) {
        let dt = self.cfg.dt;
        self.spawn_step();
        self.rebuild_index();
        let t = self.world.clock();
        let tick = self.world.tick;

        // Control flags.
        for i in 0..self.world.vehicles.len() {
            let inside = self.in_control_zone(&self.world.vehicles[i]);
            let v = &mut self.world.vehicles[i];
            if inside && !v.controlled {
                v.next_decision = Some(tick);
            }
            if !inside {
                v.next_decision = None;
            }
            v.controlled = inside;
        }

        // Policy decisions.
        let every = self.cfg.decision_ticks();
        for i in 0..self.world.vehicles.len() {
            let v = &self.world.vehicles[i];
            if !v.controlled || v.next_decision.is_none_or(|n| n > tick) {
                continue;
            }
            let id = v.id;
            let obs = build_observation(self, id).expect("controlled RV has an observation");
            let own_delay = obs.delay(0).min(self.cfg.delay_cap);
            if self.pending.contains_key(&id) {
                self.close_pending(id, Some(obs.values.clone()), false);
            }
            let action = policy.decide(&obs, &mut self.decision_rng);
            let reward = compute_reward(own_delay, action, false, &self.cfg.reward);
            let v = &mut self.world.vehicles[i];
            v.action = action;
            v.next_decision = Some(tick + every);
            let lane = v.lane;
            self.world.decisions += 1;
            self.pending.insert(
                id,
                Pending {
                    obs: obs.values,
                    action,
                    reward,
                },
            );
            self.log.push(Event {
                time: t,
                kind: EventType::Decision,
                vehicles: vec![id],
                location: self.net.lane(lane).name.clone(),
                extra: action.as_str().to_string(),
            });
        }

        // Claims on movements, sequential in id order.
        for i in 0..self.world.vehicles.len() {
            let v = &self.world.vehicles[i];
            if v.committed.is_some() || v.is_frozen() || v.controlled {
                continue;
            }
            let Some((m, d)) = self.approach(v) else { continue };
            if v.kind == VehicleKind::Rv && self.is_unsignalized(m) {
                continue;
            }
            if self.may_commit(i, m, d) {
                self.world.vehicles[i].committed = Some(m);
            }
        }

        // Accelerations.
        let mut accel = vec![0.0; self.world.vehicles.len()];
        for (i, a) in accel.iter_mut().enumerate() {
            let v = &self.world.vehicles[i];
            if v.is_frozen() {
                continue;
            }
            let limit = match self.segment_of(v) {
                Segment::Lane(l) => self.net.lane(l).speed_limit,
                Segment::Junction(m) => self.net.lane(self.net.movement(m).to).speed_limit,
            };
            let params = IdmParams {
                desired_speed: v.idm.desired_speed.min(limit),
                ..v.idm
            };
            let mut acc = match self.leader(i) {
                Some((gap, vl, _)) => idm_acceleration(v.speed, v.speed - vl, gap, &params),
                None => idm_acceleration(v.speed, 0.0, NO_LEADER_GAP, &params),
            };
            if let Some((m, d)) = self.approach(v) {
                let hold = if v.kind == VehicleKind::Rv && self.is_unsignalized(m) {
                    v.controlled && v.action == Action::Stop
                } else {
                    v.committed.is_none()
                };
                if hold {
                    acc = acc.min(idm_acceleration(v.speed, v.speed, d.max(1e-3), &params));
                }
            }
            *a = acc;
        }

        // Integration and segment hand-off.
        let mut arrived = Vec::new();
        for (i, &acc) in accel.iter().enumerate() {
            let v = &mut self.world.vehicles[i];
            if v.is_frozen() {
                v.speed = 0.0;
                continue;
            }
            let (speed, ds) = integrate(v.speed, acc, dt);
            v.speed = speed;
            v.position += ds;
            let path = &self.paths[v.route.index()];
            while v.position >= path[v.segment].length {
                if v.segment + 1 == path.len() {
                    arrived.push(v.id);
                    break;
                }
                v.position -= path[v.segment].length;
                v.segment += 1;
                match path[v.segment].segment {
                    Segment::Junction(_) => {
                        v.committed = None;
                        v.controlled = false;
                        v.next_decision = None;
                    }
                    Segment::Lane(l) => {
                        v.lane = l;
                        v.waiting = 0.0;
                    }
                }
            }
            if v.speed < STOP_SPEED {
                v.waiting += dt;
            }
        }

        // Conflict-zone occupancy.
        let t_next = t + dt;
        let mut cleared = Vec::new();
        for i in 0..self.world.vehicles.len() {
            let zone = self.zone_of(&self.world.vehicles[i]);
            let v = &mut self.world.vehicles[i];
            if v.zone.is_some() && zone.is_none() && !v.is_frozen() {
                cleared.push(v.id);
            }
            v.zone = zone;
        }
        for id in cleared {
            self.close_pending(id, None, false);
        }

        // Collisions.
        self.rebuild_index();
        let mut contacts: BTreeMap<(u64, u64), (CollisionKind, String)> = BTreeMap::new();
        for i in 0..self.world.vehicles.len() {
            if let Some((gap, _, j)) = self.leader(i) {
                if gap <= 0.0 {
                    let a = self.world.vehicles[i].id;
                    let b = self.world.vehicles[j].id;
                    let lane = match self.segment_of(&self.world.vehicles[i]) {
                        Segment::Lane(l) => l,
                        Segment::Junction(m) => self.net.movement(m).to,
                    };
                    contacts
                        .entry((a.min(b), a.max(b)))
                        .or_insert((CollisionKind::RearEnd, self.net.lane(lane).name.clone()));
                }
            }
        }
        let in_zone: Vec<(usize, MovementId)> = self
            .world
            .vehicles
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.zone.map(|m| (i, m)))
            .collect();
        for (x, &(i, mi)) in in_zone.iter().enumerate() {
            for &(j, mj) in &in_zone[x + 1..] {
                if self.net.in_conflict(mi, mj) {
                    let a = self.world.vehicles[i].id;
                    let b = self.world.vehicles[j].id;
                    let ix = self.net.intersection(self.net.movement(mi).intersection);
                    contacts.insert(
                        (a.min(b), a.max(b)),
                        (CollisionKind::Crossing, ix.zone.clone()),
                    );
                }
            }
        }
        for (&(a, b), (kind, loc)) in &contacts {
            if self.contacts.contains(&(a, b)) {
                continue;
            }
            self.world.collision_events += 1;
            if *kind == CollisionKind::Crossing {
                self.world.crossing_events += 1;
            }
            for id in [a, b] {
                self.world.collided.insert(id);
                let i = self.world.index_of(id).unwrap();
                let v = &mut self.world.vehicles[i];
                if v.collided_at.is_none() {
                    v.collided_at = Some(t_next);
                    v.speed = 0.0;
                    v.controlled = false;
                    v.committed = None;
                }
            }
            self.log.push(Event {
                time: t_next,
                kind: EventType::Collision,
                vehicles: vec![a, b],
                location: loc.clone(),
                extra: kind.as_str().to_string(),
            });
            for id in [a, b] {
                self.close_pending(id, None, true);
            }
        }
        self.contacts = contacts.into_keys().collect();

        // Departures and post-collision removal.
        let arrived: BTreeSet<u64> = arrived.into_iter().collect();
        let dwell = self.cfg.collision_dwell;
        let mut removed = Vec::new();
        for v in &self.world.vehicles {
            if let Some(at) = v.collided_at {
                if t_next - at >= dwell - 1e-9 {
                    removed.push((v.id, false));
                }
            } else if arrived.contains(&v.id) {
                removed.push((v.id, true));
            }
        }
        for &(id, departed) in &removed {
            self.pending.remove(&id);
            let v = self.world.vehicle(id).unwrap();
            let (lane, spawn_time) = (v.lane, v.spawn_time);
            if departed {
                self.world.departed += 1;
                self.log.push(Event {
                    time: t_next,
                    kind: EventType::Departure,
                    vehicles: vec![id],
                    location: self.net.lane(lane).name.clone(),
                    extra: format!("{:.1}", t_next - spawn_time),
                });
            } else {
                self.world.collision_removed += 1;
            }
        }
        if !removed.is_empty() {
            let gone: BTreeSet<u64> = removed.iter().map(|r| r.0).collect();
            self.world.vehicles.retain(|v| !gone.contains(&v.id));
            self.contacts.retain(|(a, b)| !gone.contains(a) && !gone.contains(b));
        }

        self.world.tick += 1;
        debug_assert_eq!(
            self.world.spawned,
            self.world.departed + self.world.active() + self.world.collision_removed
        );
    }

    /// Steps until `duration` seconds of simulated time have elapsed.
    pub fn run(&mut self, duration: f64, policy: &mut dyn Policy) {
        let ticks = (duration / self.cfg.dt).round() as u64;
        for _ in 0..ticks {
            self.step(policy);
        }
    }

    /// Observation for a controlled RV.
    pub fn observe(&self, rv: u64) -> Result<Observation, EngineError> {
        build_observation(self, rv)
    }
}

/// One complete rollout: a pure function of its inputs.
pub fn run_rollout(
    net: &Network,
    schedule: &DemandSchedule,
    cfg: &EngineConfig,
    policy: &mut dyn Policy,
    seed: u64,
    duration: f64,
) -> Result<(EventLog, RolloutSummary), EngineError> {
    let mut sim = Simulation::new(net, cfg.clone(), schedule, seed)?;
    sim.run(duration, policy);
    let summary = sim.summary(seed);
    Ok((sim.into_log(), summary))
}

#[cfg(test)]
mod tests;
