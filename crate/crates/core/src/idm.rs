//! Intelligent Driver Model car-following and kinematic integration.

/// Gap to use when there is no leader: the interaction term vanishes exactly.
pub const NO_LEADER_GAP: f64 = f64::INFINITY;

/// Hard deceleration cap, m/s². Deliberately finite so that bad decisions can
/// still end in a collision.
pub const EMERGENCY_DECEL: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    /// Desired speed v0, m/s.
    pub desired_speed: f64,
    /// Safe time headway T, s.
    pub time_headway: f64,
    /// Jam distance s0, m.
    pub min_gap: f64,
    /// Maximum acceleration a, m/s².
    pub max_accel: f64,
    /// Comfortable deceleration b, m/s².
    pub comfortable_decel: f64,
    /// Acceleration exponent δ.
    pub accel_exponent: f64,
}

impl Default for IdmParams {
    /// Urban defaults: 50 km/h, 1.5 s headway, 2 m jam gap.
    fn default() -> Self {
        IdmParams {
            desired_speed: 13.9,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.0,
            comfortable_decel: 1.5,
            accel_exponent: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("desired_speed", self.desired_speed),
            ("time_headway", self.time_headway),
            ("min_gap", self.min_gap),
            ("max_accel", self.max_accel),
            ("comfortable_decel", self.comfortable_decel),
            ("accel_exponent", self.accel_exponent),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.accel_exponent < 1.0 {
            return Err(format!(
                "accel_exponent must be >= 1, got {}",
                self.accel_exponent
            ));
        }
        Ok(())
    }

    /// Desired dynamical gap s*, floored at the jam distance.
    pub fn desired_gap(&self, speed: f64, approach_rate: f64) -> f64 {
        let interaction = speed * approach_rate
            / (2.0 * (self.max_accel * self.comfortable_decel).sqrt());
        (self.min_gap + speed * self.time_headway + interaction).max(self.min_gap)
    }
}

/// IDM acceleration for a follower at `speed` closing on its leader at
/// `approach_rate` (own speed minus leader speed) with bumper-to-bumper `gap`.
/// The result is clamped to `[-EMERGENCY_DECEL, max_accel]`.
pub fn idm_acceleration(speed: f64, approach_rate: f64, gap: f64, params: &IdmParams) -> f64 {
    let free = (speed / params.desired_speed).powf(params.accel_exponent);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        let ratio = params.desired_gap(speed, approach_rate) / gap.max(1e-6);
        ratio * ratio
    };
    (params.max_accel * (1.0 - free - interaction)).clamp(-EMERGENCY_DECEL, params.max_accel)
}

/// One semi-implicit Euler step: speed first, then position with the new speed.
/// Returns `(speed', distance travelled)`.
pub fn integrate(speed: f64, accel: f64, dt: f64) -> (f64, f64) {
    let v = (speed + accel * dt).max(0.0);
    (v, v * dt)
}

/// Steps a single-lane platoon (index 0 leads, rear-most last) in place.
/// Positions are front bumpers; `length` is the common vehicle length.
pub fn step_platoon(
    positions: &mut [f64],
    speeds: &mut [f64],
    length: f64,
    params: &IdmParams,
    dt: f64,
) {
    let n = positions.len();
    let mut accel = vec![0.0; n];
    for i in 0..n {
        accel[i] = if i == 0 {
            idm_acceleration(speeds[0], 0.0, NO_LEADER_GAP, params)
        } else {
            let gap = positions[i - 1] - length - positions[i];
            idm_acceleration(speeds[i], speeds[i] - speeds[i - 1], gap, params)
        };
    }
    for i in 0..n {
        let (v, ds) = integrate(speeds[i], accel[i], dt);
        speeds[i] = v;
        positions[i] += ds;
    }
}
