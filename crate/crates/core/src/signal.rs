//! Fixed-time signal evaluation.

use crate::error::EngineError;
use crate::network::{Control, IntersectionId, MovementId, Network, SignalPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub intersection: IntersectionId,
    pub phase_index: usize,
    pub time_into_phase: f64,
}

/// Phase index and offset into it for time `t` (taken modulo the cycle).
pub fn phase_at(plan: &SignalPlan, t: f64) -> (usize, f64) {
    let mut rem = t.max(0.0).rem_euclid(plan.cycle_length);
    for (i, p) in plan.phases.iter().enumerate() {
        if rem < p.duration {
            return (i, rem);
        }
        rem -= p.duration;
    }
    // Floating-point residue at the very end of the cycle.
    (0, 0.0)
}

pub fn phase_state(net: &Network, intersection: IntersectionId, t: f64) -> Option<PhaseState> {
    let plan = net.intersection(intersection).plan()?;
    let (phase_index, time_into_phase) = phase_at(plan, t);
    Some(PhaseState {
        intersection,
        phase_index,
        time_into_phase,
    })
}

/// Whether `movement` may enter its intersection at time `t`. Unsignalized
/// intersections always permit; the decision belongs to the vehicles.
pub fn movement_permitted(net: &Network, movement: MovementId, t: f64) -> Result<bool, EngineError> {
    let mv = net
        .movements()
        .get(movement.index())
        .ok_or(EngineError::UnknownMovement(movement.index()))?;
    Ok(match &net.intersection(mv.intersection).control {
        Control::Unsignalized => true,
        Control::Signalized(plan) => {
            let (phase, _) = phase_at(plan, t);
            plan.permits(phase, movement)
        }
    })
}

/// Movements currently showing green at `intersection`.
pub fn permitted_set(net: &Network, intersection: IntersectionId, t: f64) -> Vec<MovementId> {
    let ix = net.intersection(intersection);
    match &ix.control {
        Control::Unsignalized => ix.movements.clone(),
        Control::Signalized(plan) => plan.phases[phase_at(plan, t).0].permitted.clone(),
    }
}
