use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;

use crate::error::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollisionKind {
    RearEnd,
    Crossing,
}

impl CollisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CollisionKind::RearEnd => "rear_end",
            CollisionKind::Crossing => "crossing",
        }
    }

    pub fn parse(s: &str) -> Option<CollisionKind> {
        match s {
            "rear_end" => Some(CollisionKind::RearEnd),
            "crossing" => Some(CollisionKind::Crossing),
            _ => None,
        }
    }
}

/// RearEnd events are located on a lane, Crossing events in a conflict zone.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub time: f64,
    pub kind: CollisionKind,
    pub vehicles: [u64; 2],
    pub location: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventType {
    Spawn,
    Departure,
    Collision,
    Decision,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Spawn => "Spawn",
            EventType::Departure => "Departure",
            EventType::Collision => "Collision",
            EventType::Decision => "Decision",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventType,
    pub vehicles: Vec<u64>,
    pub location: String,
    pub extra: String,
}

/// Append-only record of everything that happened in one rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    /// Decision events are the bulk of a log; they can be switched off.
    pub record_decisions: bool,
}

impl EventLog {
    pub fn new(record_decisions: bool) -> EventLog {
        EventLog {
            events: Vec::new(),
            record_decisions,
        }
    }

    pub fn push(&mut self, event: Event) {
        if event.kind == EventType::Decision && !self.record_decisions {
            return;
        }
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn collisions(&self) -> impl Iterator<Item = CollisionEvent> + '_ {
        self.events
            .iter()
            .filter(|e| e.kind == EventType::Collision)
            .map(|e| CollisionEvent {
                time: e.time,
                kind: CollisionKind::parse(&e.extra).unwrap_or(CollisionKind::RearEnd),
                vehicles: [e.vehicles[0], e.vehicles[1]],
                location: e.location.clone(),
            })
    }

    pub fn count(&self, kind: EventType) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Distinct vehicles appearing in any collision event.
    pub fn collided_vehicles(&self) -> BTreeSet<u64> {
        self.collisions().flat_map(|c| c.vehicles).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "event_type", "vehicle_ids", "location", "extra"])?;
        for e in &self.events {
            let ids = e
                .vehicles
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                format!("{:.1}", e.time).as_str(),
                e.kind.as_str(),
                &ids,
                &e.location,
                &e.extra,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Counters reported at the end of a rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutSummary {
    pub seed: u64,
    pub duration: f64,
    pub spawned: u64,
    pub departed: u64,
    /// Distinct vehicles involved in at least one collision.
    pub collided: u64,
    pub collision_events: u64,
    pub crossing_events: u64,
    pub rear_end_events: u64,
    pub collision_removed: u64,
    pub active: u64,
    /// Arrivals still waiting for space at their entry lane.
    pub queued: u64,
    pub rv_spawned: u64,
    pub decisions: u64,
}

impl RolloutSummary {
    pub fn collision_rate(&self) -> Option<f64> {
        (self.departed > 0).then(|| self.collided as f64 / self.departed as f64)
    }

    pub fn to_text(&self) -> String {
        let rate = match self.collision_rate() {
            Some(r) => format!("{r:.6}"),
            None => "undefined".to_string(),
        };
        format!(
            "seed = {}\nduration = {}\nspawned = {}\nrv_spawned = {}\ndeparted = {}\ncollided = {}\n\
             collision_events = {}\ncrossing_events = {}\nrear_end_events = {}\n\
             collision_removed = {}\nactive = {}\nqueued = {}\ndecisions = {}\ncollision_rate = {}\n",
            self.seed,
            self.duration,
            self.spawned,
            self.rv_spawned,
            self.departed,
            self.collided,
            self.collision_events,
            self.crossing_events,
            self.rear_end_events,
            self.collision_removed,
            self.active,
            self.queued,
            self.decisions,
            rate
        )
    }
}
