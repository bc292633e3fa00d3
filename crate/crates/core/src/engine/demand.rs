use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::VehicleKind;
use crate::error::EngineError;
use crate::network::{LaneId, Network, RouteId};

/// How many vehicles enter the network, when, and what fraction are RVs.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSchedule {
    pub total_vehicles: u64,
    pub horizon: f64,
    pub rv_penetration: f64,
}

impl DemandSchedule {
    pub fn new(total_vehicles: u64, horizon: f64, rv_penetration: f64) -> DemandSchedule {
        DemandSchedule {
            total_vehicles,
            horizon,
            rv_penetration,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.total_vehicles == 0 {
            return Err(EngineError::InvalidDemand("total_vehicles must be > 0".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(EngineError::InvalidDemand(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        if !(0.0..=1.0).contains(&self.rv_penetration) {
            return Err(EngineError::InvalidDemand(format!(
                "rv_penetration must lie in [0, 1], got {}",
                self.rv_penetration
            )));
        }
        Ok(())
    }

    /// Number of RVs over the whole schedule.
    pub fn rv_quota(&self) -> u64 {
        (self.rv_penetration * self.total_vehicles as f64).round() as u64
    }

    /// Interleaved quota: vehicle `i` is an RV iff the running quota ticks over
    /// at `i`. Exactly `rv_quota()` of the first `total_vehicles` are RVs.
    pub fn kind_of(&self, i: u64) -> VehicleKind {
        let r = self.rv_quota() as u128;
        let n = self.total_vehicles as u128;
        let i = i as u128;
        if (i + 1) * r / n > i * r / n {
            VehicleKind::Rv
        } else {
            VehicleKind::Hv
        }
    }

    /// Origin-destination table of the network: routes with their weights as
    /// spawn rates per vehicle.
    pub fn origin_rates(&self, net: &Network) -> Vec<(LaneId, f64)> {
        let total: f64 = net.routes().iter().map(|r| r.weight).sum();
        let mut rates: Vec<(LaneId, f64)> = Vec::new();
        for r in net.routes() {
            let origin = r.lanes[0];
            let rate = self.total_vehicles as f64 / self.horizon * r.weight / total;
            match rates.iter_mut().find(|(l, _)| *l == origin) {
                Some(entry) => entry.1 += rate,
                None => rates.push((origin, rate)),
            }
        }
        rates.sort_by_key(|(l, _)| *l);
        rates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub index: u64,
    pub route: RouteId,
    pub kind: VehicleKind,
}

/// Draws the full arrival list: stratified times `(i + U) * H / N` and routes
/// sampled by OD weight.
pub fn plan_arrivals(
    schedule: &DemandSchedule,
    net: &Network,
    rng: &mut ChaCha8Rng,
) -> Vec<Arrival> {
    let routes = net.routes();
    if routes.is_empty() {
        return Vec::new();
    }
    let mut cumulative = Vec::with_capacity(routes.len());
    let mut acc = 0.0;
    for r in routes {
        acc += r.weight;
        cumulative.push(acc);
    }
    let n = schedule.total_vehicles;
    let slot = schedule.horizon / n as f64;
    (0..n)
        .map(|i| {
            let time = (i as f64 + rng.random::<f64>()) * slot;
            let u = rng.random::<f64>() * acc;
            let route = cumulative.partition_point(|&c| c <= u).min(routes.len() - 1);
            Arrival {
                time,
                index: i,
                route: RouteId(route),
                kind: schedule.kind_of(i),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn quota_is_exact() {
        for (n, p, want) in [(100, 0.8, 80), (100, 0.0, 0), (7, 0.5, 4), (300, 0.25, 75), (1, 1.0, 1)] {
            let s = DemandSchedule::new(n, 1000.0, p);
            let got = (0..n).filter(|&i| s.kind_of(i) == VehicleKind::Rv).count() as u64;
            assert_eq!(got, want, "n={n} p={p}");
        }
    }

    #[test]
    fn arrivals_are_sorted_within_horizon() {
        let net = crate::network::generate_grid(1, 0, &crate::network::GridGeometry::new(1, 1))
            .unwrap();
        let s = DemandSchedule::new(50, 1000.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = plan_arrivals(&s, &net, &mut rng);
        assert_eq!(a.len(), 50);
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(a.iter().all(|x| (0.0..1000.0).contains(&x.time)));
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(DemandSchedule::new(0, 10.0, 0.5).validate().is_err());
        assert!(DemandSchedule::new(10, 10.0, 1.5).validate().is_err());
        assert!(DemandSchedule::new(10, 0.0, 0.5).validate().is_err());
    }
}
